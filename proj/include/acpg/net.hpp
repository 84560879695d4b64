#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "acpg/etf.hpp"
#include "acpg/linalg.hpp"

namespace acpg::net {

class NetError : public std::runtime_error {
  public:
    explicit NetError(const std::string& what) : std::runtime_error(what) {}
};

class StaleCacheError : public NetError {
  public:
    StaleCacheError() : NetError("backward: forward cache does not match current parameters") {}
};

class NonFiniteGradientError : public NetError {
  public:
    explicit NonFiniteGradientError(const std::string& where)
        : NetError("non-finite gradient in " + where) {}
};

struct DenseLayer {
    Mat w;  // out x in
    Vec b;
};

// Provenance of a frozen ETF head, carried through checkpoints.
struct EtfProvenance {
    std::uint64_t seed = 0;
    int k = 0;
    int d = 0;
    double energy = 1.0;
};

// Feed-forward policy network: ReLU backbone plus a bias-free action
// selection layer. The head can be frozen to an ETF, in which case it is
// bit-identical before and after any number of training steps.
struct PolicyNet {
    std::vector<DenseLayer> backbone;  // each followed by ReLU
    Mat head;                          // k x d
    bool frozen = false;
    std::optional<EtfProvenance> etf;
    // Optional activation norm cap E_H: h is rescaled onto the ball
    // ||h||^2 <= cap before the head. <= 0 disables.
    double activation_cap = 0.0;
    // Bumped on every parameter update; forward caches are pinned to it.
    std::uint64_t version = 0;

    int in_dim() const { return backbone.front().w.cols; }
    int d() const { return head.cols; }
    int k() const { return head.rows; }
    std::size_t param_count() const;
};

struct ForwardResult {
    Vec h;       // activation entering the head (after the cap, if any)
    Vec logits;  // z = W h
    Vec probs;   // softmax(z)
};

// Batch forward cache; required by backward().
struct ForwardCache {
    std::uint64_t net_version = 0;
    std::vector<Vec> inputs;
    std::vector<std::vector<Vec>> post;  // per sample, per backbone layer (post-ReLU)
    std::vector<Vec> h_raw;              // last backbone output before the cap
    std::vector<Vec> h;                  // activation fed to the head
    std::vector<Vec> logits;
    std::vector<Vec> probs;

    int size() const { return static_cast<int>(inputs.size()); }
};

struct LayerGrad {
    Mat w;
    Vec b;
};

// Per-parameter gradient buffers matching PolicyNet shapes. The head buffer
// of a frozen net is identically zero.
struct GradientTape {
    std::vector<LayerGrad> backbone;
    Mat head;
    double loss = 0.0;
};

// hidden = widths of the backbone layers; the last width is the activation
// dimension d. He-uniform initialization.
PolicyNet make_net(int in_dim, const std::vector<int>& hidden, int k,
                   std::mt19937_64& rng);

// Replaces the head with the ETF columns (transposed into k x d) and freezes it.
void freeze_etf_head(PolicyNet& net, const etf::EtfMatrix& m);

ForwardResult forward(const PolicyNet& net, const Vec& state);
ForwardCache forward_batch(const PolicyNet& net, const std::vector<Vec>& states);

// dlogits: per-sample gradients of the scalar loss w.r.t. the logits.
GradientTape backward(const PolicyNet& net, const ForwardCache& cache,
                      const std::vector<Vec>& dlogits);

GradientTape zero_tape(const PolicyNet& net);
bool tape_finite(const GradientTape& tape);
double tape_grad_norm(const GradientTape& tape);
void clip_tape_norm(GradientTape& tape, double max_norm);

void sgd_step(PolicyNet& net, const GradientTape& tape, double lr);

// First/second moment buffers for Adam, shaped like the net.
struct AdamState {
    std::vector<LayerGrad> m_backbone, v_backbone;
    Mat m_head, v_head;
    int t = 0;
};

AdamState make_adam_state(const PolicyNet& net);
void adam_step(PolicyNet& net, const GradientTape& tape, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Versioned JSON checkpoint: layer shapes, row-major weights, frozen flag,
// ETF provenance.
std::string to_json(const PolicyNet& net);
PolicyNet from_json(const std::string& text);
void save_json(const PolicyNet& net, const std::string& path);
PolicyNet load_json(const std::string& path);

// Serialized bytes of the head alone (exact doubles); used for bit-stability
// checks on frozen heads.
std::string head_bytes(const PolicyNet& net);

}  // namespace acpg::net
