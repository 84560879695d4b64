#pragma once

#include <string>
#include <vector>

#include "acpg/linalg.hpp"

namespace acpg::metrics {

class MetricError : public std::runtime_error {
  public:
    explicit MetricError(const std::string& what) : std::runtime_error(what) {}
};

// Per-class activation lists; class k holds the activations of samples whose
// label (optimal action, or policy argmax when no oracle exists) is k.
struct ActivationSet {
    std::vector<std::vector<Vec>> per_class;

    int num_classes() const { return static_cast<int>(per_class.size()); }
    int dim() const;
    int count(int k) const { return static_cast<int>(per_class[k].size()); }
    int total() const;
    void add(int k, Vec h);
};

// The collapse diagnostics tracked once per epoch. The _w values measure the
// action selection layer directly (uncentered cosines); the _h values measure
// class-mean activations centered at the global mean.
struct CollapseReport {
    int epoch = 0;
    double equinorm_h = 0.0;
    double equinorm_w = 0.0;
    double equiang_std_h = 0.0;
    double equiang_std_w = 0.0;
    double maxangle_h = 0.0;
    double maxangle_w = 0.0;
    double within_var = 0.0;
    double self_duality = 0.0;
    bool sampled = false;  // true when labels come from policy argmax, not an oracle
    bool valid = true;     // false when a class was empty and metrics are undefined
};

Vec global_mean(const ActivationSet& a);
std::vector<Vec> class_means(const ActivationSet& a);

// Std_k(||v_k||) / Avg_k(||v_k||), population std.
double equinorm(const std::vector<Vec>& vectors);

// Population std over the K(K-1)/2 distinct pairwise cosines. Returns 0 for
// K = 2 (a single pair has no spread). Vectors are used as given; center
// activations at the global mean before calling.
double equiangularity_std(const std::vector<Vec>& vectors);

// Avg over k != k' of |cos(k, k') + 1/(K-1)|; zero exactly at the maximal
// equiangular separation.
double maxangle_metric(const std::vector<Vec>& vectors);

// Tr(Sigma_W Sigma_B^+) / K with Sigma_W the sample covariance about class
// means and Sigma_B the covariance of class means about the global mean.
// Pseudo-inverse via SVD with singular value cutoff 1e-8 * sigma_max.
double within_class_variability(const ActivationSet& a);

// mean_k cos(h_k - h_G, w_k); 1 at exact self-duality.
double self_duality(const ActivationSet& a, const std::vector<Vec>& w);

// Full report. `w` are the action selection layer rows (one vector per class).
CollapseReport collapse_report(const ActivationSet& a, const std::vector<Vec>& w,
                               int epoch, bool sampled = false);

// Centered class means h_k - h_G.
std::vector<Vec> centered_class_means(const ActivationSet& a);

}  // namespace acpg::metrics
