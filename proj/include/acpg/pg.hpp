#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "acpg/batch.hpp"
#include "acpg/config.hpp"
#include "acpg/envs.hpp"
#include "acpg/linalg.hpp"
#include "acpg/metrics.hpp"
#include "acpg/net.hpp"

namespace acpg::pg {

class PgError : public std::runtime_error {
 public:
  explicit PgError(const std::string& what) : std::runtime_error(what) {}
};

// One rollout. Steps carry whatever was recorded at collect time: observation,
// action, reward, behavior-policy probabilities, value prediction, class label.
struct Episode {
  std::vector<Transition> steps;
  double total_reward = 0.0;
};

// Discounted reward-to-go G_t = sum_{l>=0} gamma^l r_{t+l}.
Vec compute_returns(const Vec& rewards, double gamma);

// Generalized advantage estimates over one episode; the value past the final
// step is taken as zero (no bootstrap across episode ends). lambda = 0 gives
// the one-step TD error r_t + gamma V(s_{t+1}) - V(s_t).
Vec gae_advantages(const Vec& rewards, const Vec& values, double gamma,
                   double lambda);

// Multinomial draw from probs, mixed with an epsilon-uniform layer: with
// probability epsilon the action is uniform over the arms.
int select_action(const Vec& probs, double epsilon, std::mt19937_64& rng);

double entropy(const Vec& probs);

// (x - mean) / (population std + 1e-8), the per-collect normalization applied
// to returns (REINFORCE) and advantages (PPO).
Vec standardized(const Vec& xs);

// log softmax(logits)[action], max-shifted.
double log_prob_from_logits(const Vec& logits, int action);

// The value function reuses the policy-net plumbing with a one-row head;
// v(s) = logits[0]. Caches, tapes, Adam, and checkpoints all carry over.
using ValueNet = net::PolicyNet;
ValueNet make_value_net(int in_dim, const std::vector<int>& hidden,
                        std::mt19937_64& rng);
double value_of(const ValueNet& v, const Vec& state);

// Per-sample clipped surrogate term min(ratio * A, clip(ratio) * A) where
// ratio = pi_new(a|s) / pi_old(a|s). If dlogits is non-null it receives the
// gradient of the term w.r.t. the new logits (zero on the clipped-flat
// branch).
double clipped_term(const Vec& logits, int action, double advantage,
                    double old_log_prob, double clip_eps, Vec* dlogits);

struct UpdateStats {
  double policy_loss = 0.0;  // last minibatch
  double value_loss = 0.0;   // last minibatch mean squared error
  double entropy = 0.0;      // last minibatch mean entropy
  double kl = 0.0;           // mean KL(old || new) after the last pass
  bool kl_stopped = false;   // passes were cut short by the KL guard
  int minibatches = 0;
};

// Update passes abort once mean KL(old || new) exceeds this.
inline constexpr double kKlLimit = 0.5;

// One score-function gradient step on a prepared minibatch:
// loss = -mean(log pi(a|s) * psi) - entropy_coef * mean H(pi(s)),
// with psi read from Transition::advantage. Returns the loss.
double reinforce_step(net::PolicyNet& net, net::AdamState& opt,
                      const TransitionBatch& batch, double lr,
                      double entropy_coef, double max_grad_norm);

// Full collect-buffer update: fills returns, standardizes them into psi,
// then runs repeat_per_collect passes of minibatch steps (class-balanced
// draws when cfg.balanced, shuffled contiguous chunks otherwise).
UpdateStats reinforce_update(net::PolicyNet& net, net::AdamState& opt,
                             std::vector<Episode>& episodes,
                             const config::TrainConfig& cfg,
                             std::mt19937_64& rng);

// Clipped-surrogate update with value and entropy terms. Fills advantages and
// value targets via GAE, standardizes advantages, then runs repeat passes of
// shuffled minibatches; stops early if the KL guard trips.
UpdateStats ppo_update(net::PolicyNet& net, net::AdamState& popt,
                       ValueNet& vnet, net::AdamState& vopt,
                       std::vector<Episode>& episodes,
                       const config::TrainConfig& cfg, std::mt19937_64& rng);

struct EpochRow {
  int epoch = 0;             // 1-based
  double reward_mean = 0.0;  // evaluation over cfg.eval_episodes: greedy
                             // actions, exploration epsilon applied
  double reward_std = 0.0;   // population std over those episodes
  bool stop_flag = false;    // moving average (window 5) >= stop_threshold
  metrics::CollapseReport collapse;
  UpdateStats stats;
};

struct RunArtifact {
  config::TrainConfig cfg;
  std::vector<EpochRow> rows;
  double best = 0.0;          // max epoch reward_mean
  double final_reward = 0.0;  // last epoch reward_mean
  double final_std = 0.0;     // last epoch reward_std
  int stop_epoch = 0;         // first flagged epoch; cfg.epochs if never
  bool threshold_reached = false;
  std::string policy_json;  // final policy checkpoint
  std::string value_json;   // final value checkpoint (ppo only)
};

using EpochCallback = std::function<void(const EpochRow&)>;

// Train one run to completion: collect / update / deployed-policy eval /
// collapse report per epoch. Deterministic in cfg.seed. on_epoch (if set)
// fires after every epoch so callers can flush partial results.
RunArtifact run_experiment(const config::TrainConfig& cfg,
                           const EpochCallback& on_epoch = {});

// Exact-population collapse report: all 8 one-hot gridworld states labeled by
// the planning oracle.
metrics::CollapseReport collapse_exact_grid(const net::PolicyNet& net,
                                            const envs::IdealCliffWorld& env,
                                            int epoch);

// Sampled collapse report: given observations labeled by the current policy
// argmax. Reports valid = false when some action never wins the argmax.
metrics::CollapseReport collapse_sampled(const net::PolicyNet& net,
                                         const std::vector<Vec>& observations,
                                         int epoch);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRow& row);
std::string run_json(const RunArtifact& art);

// Writes metrics.csv, run.json, policy.json (and value.json when present)
// under out_dir, creating it if needed.
void write_artifact(const RunArtifact& art, const std::string& out_dir);

}  // namespace acpg::pg
