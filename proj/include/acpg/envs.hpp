#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "acpg/batch.hpp"
#include "acpg/linalg.hpp"

namespace acpg::envs {

class EnvError : public std::runtime_error {
  public:
    explicit EnvError(const std::string& what) : std::runtime_error(what) {}
};

class InsufficientSamplesError : public EnvError {
  public:
    InsufficientSamplesError(int class_k, int have, int need)
        : EnvError("balanced_batch: class " + std::to_string(class_k) + " has " +
                   std::to_string(have) + " samples, need " + std::to_string(need)),
          class_k(class_k) {}
    int class_k;
};

struct StepResult {
    Vec obs;
    double reward = 0.0;
    bool done = false;
};

// Common environment contract: seedable reset, deterministic step given the
// seed and action sequence, bounded episode length.
class Env {
  public:
    virtual ~Env() = default;
    virtual Vec reset(std::uint64_t seed) = 0;
    virtual StepResult step(int action) = 0;
    virtual int action_count() const = 0;
    virtual int obs_dim() const = 0;
    virtual int max_steps() const = 0;
    virtual std::string name() const = 0;
};

// 2 x 4 gridworld with two exit cells flanking the central 2 x 2 region: one
// reached by moving up from either top-central cell, one by moving down from
// either bottom-central cell. Observations are one-hot over the 8 playable
// cells. The symmetric layout makes each of the four actions optimal for
// exactly two cells.
class IdealCliffWorld : public Env {
  public:
    static constexpr int kRows = 2;
    static constexpr int kCols = 4;
    static constexpr int kCells = kRows * kCols;
    enum Action { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };

    struct Config {
        double reward_step = -1.0;
        double reward_exit = 10.0;
        int max_steps = 50;
        bool random_start = true;  // exploring starts over all 8 cells
        int fixed_start = 0;
    };

    IdealCliffWorld() : IdealCliffWorld(Config{}) {}
    explicit IdealCliffWorld(Config cfg);

    Vec reset(std::uint64_t seed) override;
    StepResult step(int action) override;
    int action_count() const override { return 4; }
    int obs_dim() const override { return kCells; }
    int max_steps() const override { return cfg_.max_steps; }
    std::string name() const override { return "cliff"; }

    int state() const { return state_; }
    const Config& config() const { return cfg_; }
    static Vec one_hot(int cell);

    // Deterministic transition used by both step() and the planning oracles.
    // Returns {next_cell, reward, exited}; next_cell is -1 on exit.
    struct Move {
        int next = 0;
        double reward = 0.0;
        bool exited = false;
    };
    Move apply(int cell, int action) const;

  private:
    Config cfg_;
    int state_ = 0;
    int steps_ = 0;
    bool done_ = true;
    std::mt19937_64 rng_;
};

// opt(s) for every playable cell, computed by value iteration to convergence.
// Throws EnvError if two actions tie exactly for some state.
std::map<int, int> optimal_policy(const IdealCliffWorld& env);

// State values under the optimal policy (undiscounted), same sweep.
std::map<int, double> optimal_values(const IdealCliffWorld& env);

// Classic cart-pole: 4-dim physics state, two actions, Euler integration at
// 0.02 s, termination on |angle| > 12 deg, |position| > 2.4, or 500 steps.
class CartPole : public Env {
  public:
    struct Config {
        double gravity = 9.8;
        double mass_cart = 1.0;
        double mass_pole = 0.1;
        double half_length = 0.5;
        double force_mag = 10.0;
        double tau = 0.02;
        double angle_limit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
        double position_limit = 2.4;
        int max_steps = 500;
    };

    CartPole() : CartPole(Config{}) {}
    explicit CartPole(Config cfg);

    Vec reset(std::uint64_t seed) override;
    StepResult step(int action) override;
    int action_count() const override { return 2; }
    int obs_dim() const override { return 4; }
    int max_steps() const override { return cfg_.max_steps; }
    std::string name() const override { return "cartpole"; }

    const std::array<double, 4>& state() const { return state_; }
    void set_state(const std::array<double, 4>& s);
    // Kinetic plus potential energy of the current state (potential zero at
    // the upright pole); used by the integrator drift checks.
    double energy() const;
    // One integrator step with a raw force, no termination logic.
    void integrate(double force);
    const Config& config() const { return cfg_; }

  private:
    Config cfg_;
    std::array<double, 4> state_{};
    int steps_ = 0;
    bool done_ = true;
};

// Uniformly draws exactly n samples per optimal-action class, without
// replacement, deterministically in the rng state. Transitions must carry
// class labels. Throws InsufficientSamplesError naming the starved class.
TransitionBatch balanced_batch(const std::vector<Transition>& buffer,
                               int num_classes, int per_class,
                               std::mt19937_64& rng);

}  // namespace acpg::envs
