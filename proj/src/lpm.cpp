#include "acpg/lpm.hpp"

#include <algorithm>
#include <cmath>

namespace acpg::lpm {

namespace {

// log softmax(W^T h)[k] and, optionally, the softmax itself.
double log_prob(const etf::EtfMatrix& frame, const Vec& h, int k, Vec* probs) {
    Vec z = tmatvec(frame.vectors, h);
    double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    if (probs) {
        probs->resize(z.size());
        for (std::size_t j = 0; j < z.size(); ++j)
            (*probs)[j] = std::exp(z[j] - zmax) / sum;
    }
    return z[k] - zmax - std::log(sum);
}

void project_to_ball(Vec& h, double e_h) {
    double n2 = squared_norm(h);
    if (n2 > e_h) scale(h, std::sqrt(e_h / n2));
}

}  // namespace

LpmProblem make_problem(etf::EtfMatrix frame, const std::vector<int>& class_sizes,
                        double e_h) {
    if (static_cast<int>(class_sizes.size()) != frame.k)
        throw LpmError("make_problem: class_sizes must have one entry per frame column");
    if (e_h <= 0.0) throw LpmError("make_problem: e_h must be positive");
    LpmProblem p;
    p.frame = std::move(frame);
    p.e_h = e_h;
    for (int k = 0; k < static_cast<int>(class_sizes.size()); ++k) {
        if (class_sizes[k] <= 0)
            throw LpmError("make_problem: class sizes must be positive");
        for (int i = 0; i < class_sizes[k]; ++i) p.cls.push_back(k);
    }
    int n = p.states();
    p.visit.assign(n, 1.0);
    p.ret.assign(n, 1.0);
    p.acts.assign(n, Vec(p.frame.d, 0.0));
    return p;
}

void check_problem(const LpmProblem& p) {
    int n = p.states();
    if (n == 0) throw LpmError("problem has no states");
    if (static_cast<int>(p.visit.size()) != n ||
        static_cast<int>(p.ret.size()) != n ||
        static_cast<int>(p.acts.size()) != n)
        throw LpmError("problem field lengths disagree");
    if (p.e_h <= 0.0) throw LpmError("e_h must be positive");
    for (int s = 0; s < n; ++s) {
        if (p.cls[s] < 0 || p.cls[s] >= p.frame.k)
            throw LpmError("state class out of range");
        if (!(p.visit[s] > 0.0) || !(p.ret[s] > 0.0))
            throw LpmError("state weights must be strictly positive");
        if (static_cast<int>(p.acts[s].size()) != p.frame.d)
            throw LpmError("activation dimension disagrees with the frame");
        if (squared_norm(p.acts[s]) > p.e_h + 1e-9)
            throw LpmError("activation exceeds the energy budget");
    }
}

double lpm_objective(const LpmProblem& p) {
    double j = 0.0;
    for (int s = 0; s < p.states(); ++s)
        j += p.visit[s] * p.ret[s] * log_prob(p.frame, p.acts[s], p.cls[s], nullptr);
    return j;
}

std::vector<Vec> closed_form_activations(const LpmProblem& p) {
    double c = std::sqrt(p.e_h / p.frame.energy);
    std::vector<Vec> acts(p.states());
    for (int s = 0; s < p.states(); ++s) {
        acts[s] = p.frame.column(p.cls[s]);
        scale(acts[s], c);
    }
    return acts;
}

double target_inner(double e_h, double e_w, int k_count, bool own_class) {
    double root = std::sqrt(e_h * e_w);
    return own_class ? root : -root / (k_count - 1);
}

double theorem1_residual(const std::vector<Vec>& acts, const LpmProblem& p) {
    double worst = 0.0;
    for (int s = 0; s < p.states(); ++s) {
        Vec inner = tmatvec(p.frame.vectors, acts[s]);
        for (int j = 0; j < p.frame.k; ++j) {
            double want =
                target_inner(p.e_h, p.frame.energy, p.frame.k, j == p.cls[s]);
            worst = std::max(worst, std::abs(inner[j] - want));
        }
    }
    return worst;
}

SolveReport solve_projected_ascent(LpmProblem& p, double lr, int iters,
                                   double grad_tol) {
    if (lr <= 0.0) throw LpmError("solve_projected_ascent: lr must be positive");
    check_problem(p);

    SolveReport rep;
    double prev_j = lpm_objective(p);
    int decline_streak = 0;

    for (int it = 0; it < iters; ++it) {
        double max_step = 0.0;
        for (int s = 0; s < p.states(); ++s) {
            Vec& h = p.acts[s];
            Vec probs;
            log_prob(p.frame, h, p.cls[s], &probs);
            probs[p.cls[s]] -= 1.0;  // probs now holds p - onehot
            Vec next = h;
            for (int j = 0; j < p.frame.k; ++j)
                axpy(-lr * probs[j], p.frame.column(j), next);
            project_to_ball(next, p.e_h);
            Vec delta = next;
            axpy(-1.0, h, delta);
            max_step = std::max(max_step, norm(delta) / lr);
            h = std::move(next);
        }
        rep.iterations = it + 1;

        double j = lpm_objective(p);
        decline_streak = j < prev_j ? decline_streak + 1 : 0;
        if (decline_streak >= 100)
            throw LpmError("solve_projected_ascent: objective decreased for 100 "
                           "consecutive iterations");
        prev_j = j;

        if (max_step < grad_tol) {
            rep.converged = true;
            break;
        }
    }
    rep.objective = prev_j;
    return rep;
}

KktReport kkt_check(const Vec& h, const LpmProblem& p, int k) {
    const etf::EtfMatrix& f = p.frame;
    if (k < 0 || k >= f.k) throw LpmError("kkt_check: class out of range");
    if (static_cast<int>(h.size()) != f.d)
        throw LpmError("kkt_check: activation dimension disagrees with the frame");

    KktReport rep;
    Vec wk = f.column(k);
    double scale_h = std::sqrt(p.e_h / f.energy);

    // Stationarity sum at the supplied h.
    Vec sum(f.d, 0.0);
    bool have_a = false;
    for (int j = 0; j < f.k; ++j) {
        if (j == k) continue;
        Vec diff = f.column(j);
        axpy(-1.0, wk, diff);
        axpy(std::exp(dot(h, diff)), diff, sum);

        // A evaluated at the closed-form point; identical for every j.
        double aj = std::exp(scale_h * dot(wk, diff));
        if (!have_a) {
            rep.a_value = aj;
            have_a = true;
        } else {
            rep.a_spread = std::max(rep.a_spread, std::abs(aj - rep.a_value));
        }
    }

    rep.lambda = 0.5 * std::sqrt(f.energy / p.e_h) * rep.a_value * f.k;

    double h2 = squared_norm(h);
    rep.lambda_fit = h2 > 0.0 ? -dot(sum, h) / (2.0 * h2) : 0.0;

    Vec resid = sum;
    axpy(2.0 * rep.lambda, h, resid);
    rep.residual = norm(resid);

    rep.g = h2 - p.e_h;
    rep.active = std::abs(rep.g) <= 1e-9 * std::max(1.0, p.e_h);
    return rep;
}

}  // namespace acpg::lpm
