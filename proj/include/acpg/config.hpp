#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "acpg/envs.hpp"

namespace acpg::config {

// Raised for malformed documents, unknown keys, or out-of-range values. The
// message names the offending key path (e.g. "env.max_steps").
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct EnvSpec {
  std::string name = "cliff";  // "cliff" | "cartpole"
  int max_steps = 0;           // 0 = environment default
  double reward_step = -1.0;   // cliff only
  double reward_exit = 10.0;   // cliff only
};

// Full description of one training run. Field defaults depend on the algo/env
// pair, so construct via defaults_for() or parse_config() rather than brace
// init.
struct TrainConfig {
  std::string algo = "reinforce";  // "reinforce" | "ppo"
  EnvSpec env;

  double gamma = 0.95;
  double lr = 1e-3;
  double lr_value = 1e-3;
  int batch_size = 64;
  int epochs = 100;
  // Minimum environment steps per epoch: collect/update cycles repeat until
  // this many steps were gathered (0 = exactly one cycle per epoch).
  int steps_per_epoch = 0;
  int episodes_per_collect = 8;
  int repeat_per_collect = 2;
  int eval_episodes = 10;

  // Exploration and head geometry.
  double epsilon = 0.0;  // epsilon-greedy mix at collect time
  bool acpg = false;     // frozen equiangular head + feature-norm cap
  double ew = 1.0;       // squared column norm of the frozen head
  double eh_clip = 0.0;  // feature-norm cap (0 = off); acpg default turns it on

  // PPO-only knobs (ignored by REINFORCE).
  double gae_lambda = 0.95;
  double clip_eps = 0.1;
  double value_coef = 0.25;

  double entropy_coef = 0.0;
  double max_grad_norm = 0.0;  // 0 = no clipping
  bool standardize = true;     // standardize returns/advantages per collect

  std::vector<int> hidden = {64, 64};
  double stop_threshold = 9.4;  // moving-average reward that sets stop_flag
  bool balanced = false;        // class-balanced minibatches (cliff)
  int balanced_per_class = 16;

  std::uint64_t seed = 0;
};

// Baseline config for an algo/env pair, before any file overrides.
TrainConfig defaults_for(const std::string& algo, const std::string& env_name);

// Strict JSON parse: unknown keys and out-of-range values raise ConfigError.
TrainConfig parse_config(const std::string& json_text);
TrainConfig load_config(const std::string& path);

// Serializes every field explicitly; parse(serialize(c)) reproduces c.
std::string serialize_config(const TrainConfig& cfg);

// Range checks shared by parse_config and programmatic construction.
void validate(const TrainConfig& cfg);

std::unique_ptr<envs::Env> make_env(const EnvSpec& spec);

}  // namespace acpg::config
