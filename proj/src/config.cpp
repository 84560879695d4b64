#include "acpg/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace acpg::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

std::uint64_t as_u64(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !j.is_number_integer()) fail(path, "expected an integer");
  if (j.is_number_integer() && j.get<std::int64_t>() < 0) fail(path, "must be non-negative");
  return j.get<std::uint64_t>();
}

void apply_env(const json& j, EnvSpec& env) {
  static const std::set<std::string> known = {"name", "max_steps", "reward_step",
                                             "reward_exit"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail("env." + key, "unknown key");
    if (key == "name") env.name = as_string(value, "env.name");
    else if (key == "max_steps") env.max_steps = as_int(value, "env.max_steps");
    else if (key == "reward_step") env.reward_step = as_double(value, "env.reward_step");
    else if (key == "reward_exit") env.reward_exit = as_double(value, "env.reward_exit");
  }
}

}  // namespace

TrainConfig defaults_for(const std::string& algo, const std::string& env_name) {
  TrainConfig cfg;
  cfg.algo = algo;
  cfg.env.name = env_name;
  if (algo == "reinforce") {
    cfg.gamma = 0.95;
    cfg.lr = 1e-3;
    cfg.lr_value = 1e-3;
    cfg.batch_size = 64;
    cfg.episodes_per_collect = 8;
    cfg.repeat_per_collect = 2;
    cfg.entropy_coef = 0.0;
    cfg.max_grad_norm = 0.0;
  } else if (algo == "ppo") {
    cfg.gamma = 0.99;
    cfg.lr = 2.5e-4;
    cfg.lr_value = 2.5e-4;
    cfg.batch_size = 256;
    cfg.episodes_per_collect = 10;
    cfg.repeat_per_collect = 4;
    cfg.entropy_coef = 0.01;
    cfg.max_grad_norm = 0.5;
  } else {
    fail("algo", "expected \"reinforce\" or \"ppo\", got \"" + algo + "\"");
  }
  if (env_name == "cliff") {
    cfg.stop_threshold = 9.4;
  } else if (env_name == "cartpole") {
    cfg.stop_threshold = 475.0;
  } else {
    fail("env.name", "expected \"cliff\" or \"cartpole\", got \"" + env_name + "\"");
  }
  return cfg;
}

TrainConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  std::string algo = "reinforce";
  if (j.contains("algo")) algo = as_string(j["algo"], "algo");
  std::string env_name = "cliff";
  if (j.contains("env")) {
    const json& je = j["env"];
    if (je.is_string()) env_name = je.get<std::string>();
    else if (je.is_object() && je.contains("name")) env_name = as_string(je["name"], "env.name");
    else if (!je.is_object()) fail("env", "expected a string or an object");
  }

  TrainConfig cfg = defaults_for(algo, env_name);
  if (j.contains("env") && j["env"].is_object()) apply_env(j["env"], cfg.env);

  bool saw_eh_clip = false;
  static const std::set<std::string> known = {
      "algo",          "env",
      "gamma",         "lr",
      "lr_value",      "batch_size",
      "epochs",        "steps_per_epoch",
      "episodes_per_collect",
      "repeat_per_collect", "eval_episodes",
      "epsilon",       "acpg",
      "ew",            "eh_clip",
      "gae_lambda",    "clip_eps",
      "value_coef",    "entropy_coef",
      "max_grad_norm", "standardize",
      "hidden",        "stop_threshold",
      "balanced",      "balanced_per_class",
      "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(key, "unknown key");
    if (key == "algo" || key == "env") continue;
    if (key == "gamma") cfg.gamma = as_double(value, key);
    else if (key == "lr") cfg.lr = as_double(value, key);
    else if (key == "lr_value") cfg.lr_value = as_double(value, key);
    else if (key == "batch_size") cfg.batch_size = as_int(value, key);
    else if (key == "epochs") cfg.epochs = as_int(value, key);
    else if (key == "steps_per_epoch") cfg.steps_per_epoch = as_int(value, key);
    else if (key == "episodes_per_collect") cfg.episodes_per_collect = as_int(value, key);
    else if (key == "repeat_per_collect") cfg.repeat_per_collect = as_int(value, key);
    else if (key == "eval_episodes") cfg.eval_episodes = as_int(value, key);
    else if (key == "epsilon") cfg.epsilon = as_double(value, key);
    else if (key == "acpg") cfg.acpg = as_bool(value, key);
    else if (key == "ew") cfg.ew = as_double(value, key);
    else if (key == "eh_clip") { cfg.eh_clip = as_double(value, key); saw_eh_clip = true; }
    else if (key == "gae_lambda") cfg.gae_lambda = as_double(value, key);
    else if (key == "clip_eps") cfg.clip_eps = as_double(value, key);
    else if (key == "value_coef") cfg.value_coef = as_double(value, key);
    else if (key == "entropy_coef") cfg.entropy_coef = as_double(value, key);
    else if (key == "max_grad_norm") cfg.max_grad_norm = as_double(value, key);
    else if (key == "standardize") cfg.standardize = as_bool(value, key);
    else if (key == "stop_threshold") cfg.stop_threshold = as_double(value, key);
    else if (key == "balanced") cfg.balanced = as_bool(value, key);
    else if (key == "balanced_per_class") cfg.balanced_per_class = as_int(value, key);
    else if (key == "seed") cfg.seed = as_u64(value, key);
    else if (key == "hidden") {
      if (!value.is_array() || value.empty()) fail("hidden", "expected a non-empty array");
      cfg.hidden.clear();
      for (std::size_t i = 0; i < value.size(); ++i)
        cfg.hidden.push_back(as_int(value[i], "hidden[" + std::to_string(i) + "]"));
    }
  }

  // A frozen equiangular head needs the feature-norm cap; default it on
  // unless the file pins a value (0 disables explicitly).
  if (cfg.acpg && !saw_eh_clip) cfg.eh_clip = 2.0;

  validate(cfg);
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  json j;
  j["algo"] = cfg.algo;
  j["env"] = {{"name", cfg.env.name},
              {"max_steps", cfg.env.max_steps},
              {"reward_step", cfg.env.reward_step},
              {"reward_exit", cfg.env.reward_exit}};
  j["gamma"] = cfg.gamma;
  j["lr"] = cfg.lr;
  j["lr_value"] = cfg.lr_value;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["steps_per_epoch"] = cfg.steps_per_epoch;
  j["episodes_per_collect"] = cfg.episodes_per_collect;
  j["repeat_per_collect"] = cfg.repeat_per_collect;
  j["eval_episodes"] = cfg.eval_episodes;
  j["epsilon"] = cfg.epsilon;
  j["acpg"] = cfg.acpg;
  j["ew"] = cfg.ew;
  j["eh_clip"] = cfg.eh_clip;
  j["gae_lambda"] = cfg.gae_lambda;
  j["clip_eps"] = cfg.clip_eps;
  j["value_coef"] = cfg.value_coef;
  j["entropy_coef"] = cfg.entropy_coef;
  j["max_grad_norm"] = cfg.max_grad_norm;
  j["standardize"] = cfg.standardize;
  j["hidden"] = cfg.hidden;
  j["stop_threshold"] = cfg.stop_threshold;
  j["balanced"] = cfg.balanced;
  j["balanced_per_class"] = cfg.balanced_per_class;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

void validate(const TrainConfig& cfg) {
  if (cfg.algo != "reinforce" && cfg.algo != "ppo")
    fail("algo", "expected \"reinforce\" or \"ppo\", got \"" + cfg.algo + "\"");
  if (cfg.env.name != "cliff" && cfg.env.name != "cartpole")
    fail("env.name", "expected \"cliff\" or \"cartpole\", got \"" + cfg.env.name + "\"");
  if (cfg.env.max_steps < 0) fail("env.max_steps", "must be >= 0 (0 = default)");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) fail("gamma", "must be in [0, 1]");
  if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) fail("epsilon", "must be in [0, 1]");
  if (!(cfg.lr > 0.0)) fail("lr", "must be > 0");
  if (!(cfg.lr_value > 0.0)) fail("lr_value", "must be > 0");
  if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
  if (cfg.epochs < 1) fail("epochs", "must be >= 1");
  if (cfg.steps_per_epoch < 0) fail("steps_per_epoch", "must be >= 0 (0 = one cycle)");
  if (cfg.episodes_per_collect < 1) fail("episodes_per_collect", "must be >= 1");
  if (cfg.repeat_per_collect < 1) fail("repeat_per_collect", "must be >= 1");
  if (cfg.eval_episodes < 1) fail("eval_episodes", "must be >= 1");
  if (!(cfg.ew > 0.0)) fail("ew", "must be > 0");
  if (cfg.eh_clip < 0.0) fail("eh_clip", "must be >= 0 (0 = off)");
  if (!(cfg.gae_lambda >= 0.0 && cfg.gae_lambda <= 1.0)) fail("gae_lambda", "must be in [0, 1]");
  if (cfg.algo == "ppo" && !(cfg.clip_eps > 0.0)) fail("clip_eps", "must be > 0");
  if (cfg.value_coef < 0.0) fail("value_coef", "must be >= 0");
  if (cfg.entropy_coef < 0.0) fail("entropy_coef", "must be >= 0");
  if (cfg.max_grad_norm < 0.0) fail("max_grad_norm", "must be >= 0 (0 = off)");
  if (cfg.hidden.empty()) fail("hidden", "expected a non-empty array");
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i)
    if (cfg.hidden[i] < 1) fail("hidden[" + std::to_string(i) + "]", "must be >= 1");
  if (!std::isfinite(cfg.stop_threshold)) fail("stop_threshold", "must be finite");
  if (cfg.balanced && cfg.env.name != "cliff")
    fail("balanced", "class-balanced batches need the gridworld's action labels");
  if (cfg.balanced_per_class < 1) fail("balanced_per_class", "must be >= 1");
}

std::unique_ptr<envs::Env> make_env(const EnvSpec& spec) {
  if (spec.name == "cliff") {
    envs::IdealCliffWorld::Config c;
    c.reward_step = spec.reward_step;
    c.reward_exit = spec.reward_exit;
    if (spec.max_steps > 0) c.max_steps = spec.max_steps;
    return std::make_unique<envs::IdealCliffWorld>(c);
  }
  if (spec.name == "cartpole") {
    envs::CartPole::Config c;
    if (spec.max_steps > 0) c.max_steps = spec.max_steps;
    return std::make_unique<envs::CartPole>(c);
  }
  throw ConfigError("config: env.name: unknown environment \"" + spec.name + "\"");
}

}  // namespace acpg::config
