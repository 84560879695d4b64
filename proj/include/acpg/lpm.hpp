#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "acpg/etf.hpp"
#include "acpg/linalg.hpp"

namespace acpg::lpm {

class LpmError : public std::runtime_error {
  public:
    explicit LpmError(const std::string& what) : std::runtime_error(what) {}
};

// Weighted log-softmax maximization over free per-state activations with a
// frozen frame: each state s carries a target class k(s), a visitation weight
// d(s) > 0 and a return weight psi(s) > 0, and contributes
//   d(s) * psi(s) * log softmax(W^T h_s)[k(s)]
// subject to ||h_s||^2 <= e_h. The point of the module is to show numerically
// that the maximizer is h_s = sqrt(e_h / e_w) * w_{k(s)} no matter how
// lopsided the weights are.
struct LpmProblem {
    etf::EtfMatrix frame;     // fixed W, d x k, column energy e_w
    double e_h = 1.0;         // activation energy budget
    std::vector<int> cls;     // k(s) per state
    Vec visit;                // d(s) per state, positive
    Vec ret;                  // psi(s) per state, positive
    std::vector<Vec> acts;    // h_s per state, each of dim frame.d

    int states() const { return static_cast<int>(cls.size()); }
};

// Builds a problem with class_sizes[k] states of class k, all weights 1 and
// all activations 0. Weight vectors can be reshaped by the caller afterwards.
LpmProblem make_problem(etf::EtfMatrix frame, const std::vector<int>& class_sizes,
                        double e_h);

// Throws LpmError if shapes disagree, weights are not strictly positive, or
// any activation exceeds the energy budget by more than 1e-9.
void check_problem(const LpmProblem& p);

// The weighted objective J(H) described above.
double lpm_objective(const LpmProblem& p);

// The known optimum: h_s = sqrt(e_h/e_w) * w_{k(s)} for every state.
std::vector<Vec> closed_form_activations(const LpmProblem& p);

// Target inner product h_s^T w_j at the optimum:
//   sqrt(e_h*e_w)                 for j == k(s)
//   -sqrt(e_h*e_w) / (K-1)        otherwise
double target_inner(double e_h, double e_w, int k_count, bool own_class);

// Worst-case |h_s^T w_j - target| over all states s and frame columns j.
double theorem1_residual(const std::vector<Vec>& acts, const LpmProblem& p);

struct SolveReport {
    int iterations = 0;       // iterations actually run
    bool converged = false;   // hit the projected-gradient tolerance
    double objective = 0.0;   // J at the returned activations
};

// Projected gradient ascent, one independent ascent per state (the objective
// separates). Each state takes steps on its own unweighted log-softmax term --
// a positive diagonal preconditioning that leaves the maximizers unchanged but
// keeps one learning rate workable across wildly different state weights.
// Projection clips to the ball of radius sqrt(e_h) after every step. Stops
// early when every state's projected step norm drops below grad_tol; throws
// LpmError if the weighted objective decreases 100 iterations in a row.
SolveReport solve_projected_ascent(LpmProblem& p, double lr, int iters,
                                   double grad_tol = 1e-10);

// Default step size used by the CLI and tests.
inline double default_lr(double e_w) { return 0.1 / std::sqrt(e_w); }

struct KktReport {
    double residual = 0.0;       // || sum_{j!=k} (w_j - w_k) e^{h^T(w_j-w_k)} + 2 lambda h ||
    double lambda = 0.0;         // (1/2) sqrt(e_w/e_h) * A * K
    double lambda_fit = 0.0;     // least-squares multiplier from the stationarity system
    double a_value = 0.0;        // A = exp(sqrt(e_h/e_w) * w_k^T (w_j - w_k)), any j != k
    double a_spread = 0.0;       // max |A_j - A| over j != k; 0 up to roundoff
    double g = 0.0;              // ||h||^2 - e_h
    bool active = false;         // |g| within tolerance of zero
};

// Stationarity check for one state's activation against class k. `lambda`
// comes from the closed-form multiplier; `lambda_fit` solves the same system
// numerically so the two can be compared.
KktReport kkt_check(const Vec& h, const LpmProblem& p, int k);

}  // namespace acpg::lpm
