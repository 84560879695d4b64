#include "acpg/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace acpg::envs {

IdealCliffWorld::IdealCliffWorld(Config cfg) : cfg_(cfg) {
    if (cfg_.max_steps <= 0) throw EnvError("cliff: max_steps must be positive");
    if (cfg_.fixed_start < 0 || cfg_.fixed_start >= kCells)
        throw EnvError("cliff: fixed_start out of range");
}

Vec IdealCliffWorld::one_hot(int cell) {
    Vec obs(kCells, 0.0);
    obs[cell] = 1.0;
    return obs;
}

Vec IdealCliffWorld::reset(std::uint64_t seed) {
    rng_.seed(seed);
    if (cfg_.random_start) {
        std::uniform_int_distribution<int> u(0, kCells - 1);
        state_ = u(rng_);
    } else {
        state_ = cfg_.fixed_start;
    }
    steps_ = 0;
    done_ = false;
    return one_hot(state_);
}

IdealCliffWorld::Move IdealCliffWorld::apply(int cell, int action) const {
    int row = cell / kCols;
    int col = cell % kCols;
    bool central = col == 1 || col == 2;

    // Exits sit above the top-central cells and below the bottom-central ones.
    if (action == kUp && row == 0 && central) return {-1, cfg_.reward_exit, true};
    if (action == kDown && row == 1 && central) return {-1, cfg_.reward_exit, true};

    int nrow = row, ncol = col;
    switch (action) {
        case kUp: nrow = row - 1; break;
        case kDown: nrow = row + 1; break;
        case kLeft: ncol = col - 1; break;
        case kRight: ncol = col + 1; break;
        default: throw EnvError("cliff: invalid action " + std::to_string(action));
    }
    if (nrow < 0 || nrow >= kRows || ncol < 0 || ncol >= kCols) {
        nrow = row;  // wall: stay put
        ncol = col;
    }
    return {nrow * kCols + ncol, cfg_.reward_step, false};
}

StepResult IdealCliffWorld::step(int action) {
    if (done_) throw EnvError("cliff: step() on a finished episode");
    if (action < 0 || action >= action_count())
        throw EnvError("cliff: invalid action " + std::to_string(action));

    Move mv = apply(state_, action);
    ++steps_;
    StepResult r;
    r.reward = mv.reward;
    if (mv.exited) {
        done_ = true;
        r.done = true;
        r.obs = Vec(kCells, 0.0);
        return r;
    }
    state_ = mv.next;
    if (steps_ >= cfg_.max_steps) {
        done_ = true;
        r.done = true;
    }
    r.obs = one_hot(state_);
    return r;
}

namespace {

struct Plan {
    std::map<int, int> policy;
    std::map<int, double> values;
};

Plan value_iteration(const IdealCliffWorld& env) {
    constexpr double kEps = 1e-12;
    constexpr double kTieTol = 1e-9;
    std::array<double, IdealCliffWorld::kCells> v{};
    // Undiscounted sweep; converges because the optimal policy exits in
    // finitely many steps from every cell.
    for (int iter = 0; iter < 10000; ++iter) {
        double delta = 0.0;
        for (int s = 0; s < IdealCliffWorld::kCells; ++s) {
            double best = -1e300;
            for (int a = 0; a < 4; ++a) {
                auto mv = env.apply(s, a);
                double q = mv.reward + (mv.exited ? 0.0 : v[mv.next]);
                best = std::max(best, q);
            }
            delta = std::max(delta, std::abs(best - v[s]));
            v[s] = best;
        }
        if (delta < kEps) break;
    }

    Plan plan;
    for (int s = 0; s < IdealCliffWorld::kCells; ++s) {
        double best = -1e300, second = -1e300;
        int arg = -1;
        for (int a = 0; a < 4; ++a) {
            auto mv = env.apply(s, a);
            double q = mv.reward + (mv.exited ? 0.0 : v[mv.next]);
            if (q > best) {
                second = best;
                best = q;
                arg = a;
            } else if (q > second) {
                second = q;
            }
        }
        if (best - second < kTieTol)
            throw EnvError("optimal_policy: actions tie at state " +
                           std::to_string(s) + "; reward scheme must break ties");
        plan.policy[s] = arg;
        plan.values[s] = best;
    }
    return plan;
}

}  // namespace

std::map<int, int> optimal_policy(const IdealCliffWorld& env) {
    return value_iteration(env).policy;
}

std::map<int, double> optimal_values(const IdealCliffWorld& env) {
    return value_iteration(env).values;
}

CartPole::CartPole(Config cfg) : cfg_(cfg) {
    if (cfg_.max_steps <= 0) throw EnvError("cartpole: max_steps must be positive");
}

Vec CartPole::reset(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (double& x : state_) x = u(rng);
    steps_ = 0;
    done_ = false;
    return Vec(state_.begin(), state_.end());
}

void CartPole::set_state(const std::array<double, 4>& s) {
    state_ = s;
    steps_ = 0;
    done_ = false;
}

void CartPole::integrate(double force) {
    double x = state_[0], x_dot = state_[1];
    double theta = state_[2], theta_dot = state_[3];

    double total_mass = cfg_.mass_cart + cfg_.mass_pole;
    double polemass_length = cfg_.mass_pole * cfg_.half_length;
    double costheta = std::cos(theta);
    double sintheta = std::sin(theta);

    double temp =
        (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass;
    double theta_acc =
        (cfg_.gravity * sintheta - costheta * temp) /
        (cfg_.half_length *
         (4.0 / 3.0 - cfg_.mass_pole * costheta * costheta / total_mass));
    double x_acc = temp - polemass_length * theta_acc * costheta / total_mass;

    state_[0] = x + cfg_.tau * x_dot;
    state_[1] = x_dot + cfg_.tau * x_acc;
    state_[2] = theta + cfg_.tau * theta_dot;
    state_[3] = theta_dot + cfg_.tau * theta_acc;
}

double CartPole::energy() const {
    double x_dot = state_[1], theta = state_[2], theta_dot = state_[3];
    double m_c = cfg_.mass_cart, m_p = cfg_.mass_pole, l = cfg_.half_length;
    // Pole center of mass moves with the cart plus the rotation about the pivot.
    double vpx = x_dot + l * theta_dot * std::cos(theta);
    double vpy = l * theta_dot * std::sin(theta);
    double kinetic = 0.5 * m_c * x_dot * x_dot +
                     0.5 * m_p * (vpx * vpx + vpy * vpy) +
                     0.5 * (m_p * l * l / 3.0) * theta_dot * theta_dot;
    double potential = m_p * cfg_.gravity * l * (std::cos(theta) - 1.0);
    return kinetic + potential;
}

StepResult CartPole::step(int action) {
    if (done_) throw EnvError("cartpole: step() on a finished episode");
    if (action < 0 || action >= action_count())
        throw EnvError("cartpole: invalid action " + std::to_string(action));

    integrate(action == 1 ? cfg_.force_mag : -cfg_.force_mag);
    ++steps_;

    bool fell = std::abs(state_[0]) > cfg_.position_limit ||
                std::abs(state_[2]) > cfg_.angle_limit;
    bool truncated = steps_ >= cfg_.max_steps;
    done_ = fell || truncated;

    StepResult r;
    r.obs = Vec(state_.begin(), state_.end());
    r.reward = 1.0;
    r.done = done_;
    return r;
}

TransitionBatch balanced_batch(const std::vector<Transition>& buffer,
                               int num_classes, int per_class,
                               std::mt19937_64& rng) {
    if (per_class <= 0) throw EnvError("balanced_batch: per_class must be positive");
    std::vector<std::vector<int>> by_class(num_classes);
    for (int i = 0; i < static_cast<int>(buffer.size()); ++i) {
        int k = buffer[i].class_label;
        if (k < 0 || k >= num_classes)
            throw EnvError("balanced_batch: transition without a class label");
        by_class[k].push_back(i);
    }
    for (int k = 0; k < num_classes; ++k)
        if (static_cast<int>(by_class[k].size()) < per_class)
            throw InsufficientSamplesError(
                k, static_cast<int>(by_class[k].size()), per_class);

    TransitionBatch batch;
    batch.items.reserve(static_cast<std::size_t>(num_classes) * per_class);
    for (int k = 0; k < num_classes; ++k) {
        std::shuffle(by_class[k].begin(), by_class[k].end(), rng);
        for (int i = 0; i < per_class; ++i)
            batch.items.push_back(buffer[by_class[k][i]]);
    }
    return batch;
}

}  // namespace acpg::envs
