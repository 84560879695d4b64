#include "acpg/pg.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <utility>

#include "json.hpp"

namespace acpg::pg {

namespace {

using nlohmann::json;

int argmax(const Vec& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  return {m, std::sqrt(var / n)};
}

std::vector<Transition> flatten(std::vector<Episode>& episodes) {
  std::vector<Transition> buffer;
  for (Episode& ep : episodes)
    for (Transition& t : ep.steps) buffer.push_back(t);
  if (buffer.empty()) throw PgError("update: no transitions collected");
  return buffer;
}

// In-place standardization of one scalar field across the buffer.
template <typename Get, typename Set>
void standardize_field(std::vector<Transition>& buffer, Get get, Set set) {
  Vec xs;
  xs.reserve(buffer.size());
  for (const Transition& t : buffer) xs.push_back(get(t));
  const Vec z = standardized(xs);
  for (std::size_t i = 0; i < buffer.size(); ++i) set(buffer[i], z[i]);
}

// d(-coef * H)/dz_j = coef * p_j (log p_j + H); accumulated into d at weight.
void add_entropy_grad(const Vec& p, double coef, Vec& d) {
  if (coef == 0.0) return;
  const double h = entropy(p);
  for (std::size_t j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) d[j] += coef * p[j] * (std::log(p[j]) + h);
}

double mean_entropy(const net::PolicyNet& net, const std::vector<Transition>& buffer,
                    int cap) {
  const int n = std::min<int>(cap, static_cast<int>(buffer.size()));
  double h = 0.0;
  for (int i = 0; i < n; ++i) h += entropy(net::forward(net, buffer[i].obs).probs);
  return h / n;
}

double mean_kl_old_new(const net::PolicyNet& net,
                       const std::vector<Transition>& buffer) {
  double kl = 0.0;
  for (const Transition& t : buffer) {
    const Vec z = net::forward(net, t.obs).logits;
    double zmax = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double x : z) lse += std::exp(x - zmax);
    lse = zmax + std::log(lse);
    for (std::size_t k = 0; k < t.old_probs.size(); ++k) {
      const double p = t.old_probs[k];
      if (p > 0.0) kl += p * (std::log(p) - (z[k] - lse));
    }
  }
  return kl / static_cast<double>(buffer.size());
}

std::vector<int> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

std::vector<Vec> head_rows(const net::PolicyNet& net) {
  std::vector<Vec> w;
  w.reserve(net.k());
  for (int k = 0; k < net.k(); ++k) w.push_back(net.head.row(k));
  return w;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw PgError("cannot write " + path.string());
  out << text;
}

}  // namespace

Vec compute_returns(const Vec& rewards, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw PgError("compute_returns: gamma out of [0, 1]");
  Vec g(rewards.size());
  double acc = 0.0;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

Vec gae_advantages(const Vec& rewards, const Vec& values, double gamma,
                   double lambda) {
  if (rewards.size() != values.size())
    throw PgError("gae_advantages: rewards/values length mismatch");
  const int n = static_cast<int>(rewards.size());
  Vec adv(n);
  double acc = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double next_v = (t + 1 < n) ? values[t + 1] : 0.0;
    const double delta = rewards[t] + gamma * next_v - values[t];
    acc = delta + gamma * lambda * acc;
    adv[t] = acc;
  }
  return adv;
}

int select_action(const Vec& probs, double epsilon, std::mt19937_64& rng) {
  if (probs.empty()) throw PgError("select_action: empty distribution");
  const int k = static_cast<int>(probs.size());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (epsilon > 0.0 && u01(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, k - 1);
    return pick(rng);
  }
  double u = u01(rng);
  double c = 0.0;
  for (int i = 0; i < k; ++i) {
    c += probs[i];
    if (u < c) return i;
  }
  return k - 1;
}

double entropy(const Vec& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

Vec standardized(const Vec& xs) {
  if (xs.empty()) throw PgError("standardized: empty input");
  auto [m, s] = mean_std(xs);
  Vec z(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) z[i] = (xs[i] - m) / (s + 1e-8);
  return z;
}

double log_prob_from_logits(const Vec& logits, int action) {
  if (action < 0 || action >= static_cast<int>(logits.size()))
    throw PgError("log_prob_from_logits: action out of range");
  const double zmax = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - zmax);
  return logits[action] - zmax - std::log(s);
}

ValueNet make_value_net(int in_dim, const std::vector<int>& hidden,
                        std::mt19937_64& rng) {
  return net::make_net(in_dim, hidden, 1, rng);
}

double value_of(const ValueNet& v, const Vec& state) {
  return net::forward(v, state).logits[0];
}

double clipped_term(const Vec& logits, int action, double advantage,
                    double old_log_prob, double clip_eps, Vec* dlogits) {
  if (action < 0 || action >= static_cast<int>(logits.size()))
    throw PgError("clipped_term: action out of range");
  const double logp = log_prob_from_logits(logits, action);
  const double ratio = std::exp(logp - old_log_prob);
  const double lo = 1.0 - clip_eps, hi = 1.0 + clip_eps;
  const double term =
      std::min(ratio * advantage, std::clamp(ratio, lo, hi) * advantage);
  if (dlogits) {
    Vec d(logits.size(), 0.0);
    const bool flat =
        (advantage > 0.0 && ratio > hi) || (advantage < 0.0 && ratio < lo);
    if (!flat && advantage != 0.0) {
      const Vec p = softmax(logits);
      for (std::size_t k = 0; k < p.size(); ++k)
        d[k] = advantage * ratio *
               ((static_cast<int>(k) == action ? 1.0 : 0.0) - p[k]);
    }
    *dlogits = std::move(d);
  }
  return term;
}

double reinforce_step(net::PolicyNet& net, net::AdamState& opt,
                      const TransitionBatch& batch, double lr,
                      double entropy_coef, double max_grad_norm) {
  const int n = batch.size();
  if (n == 0) throw PgError("reinforce_step: empty batch");
  std::vector<Vec> states;
  states.reserve(n);
  for (const Transition& t : batch.items) states.push_back(t.obs);
  net::ForwardCache cache = net::forward_batch(net, states);

  const double inv_n = 1.0 / n;
  std::vector<Vec> dlogits(n);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const Transition& t = batch.items[i];
    const Vec& p = cache.probs[i];
    const double psi = t.advantage;
    loss -= log_prob_from_logits(cache.logits[i], t.action) * psi * inv_n;
    Vec d = p;
    scale(d, psi * inv_n);
    d[t.action] -= psi * inv_n;
    if (entropy_coef > 0.0) {
      loss -= entropy_coef * entropy(p) * inv_n;
      add_entropy_grad(p, entropy_coef * inv_n, d);
    }
    dlogits[i] = std::move(d);
  }

  net::GradientTape tape = net::backward(net, cache, dlogits);
  tape.loss = loss;
  if (max_grad_norm > 0.0) net::clip_tape_norm(tape, max_grad_norm);
  net::adam_step(net, tape, opt, lr);
  return loss;
}

UpdateStats reinforce_update(net::PolicyNet& net, net::AdamState& opt,
                             std::vector<Episode>& episodes,
                             const config::TrainConfig& cfg,
                             std::mt19937_64& rng) {
  for (Episode& ep : episodes) {
    Vec r(ep.steps.size());
    for (std::size_t t = 0; t < ep.steps.size(); ++t) r[t] = ep.steps[t].reward;
    const Vec g = compute_returns(r, cfg.gamma);
    for (std::size_t t = 0; t < ep.steps.size(); ++t) ep.steps[t].ret = g[t];
  }
  std::vector<Transition> buffer = flatten(episodes);
  if (cfg.standardize)
    standardize_field(
        buffer, [](const Transition& t) { return t.ret; },
        [](Transition& t, double v) { t.advantage = v; });
  else
    for (Transition& t : buffer) t.advantage = t.ret;

  UpdateStats st;
  for (int pass = 0; pass < cfg.repeat_per_collect; ++pass) {
    if (cfg.balanced) {
      const TransitionBatch b =
          envs::balanced_batch(buffer, net.k(), cfg.balanced_per_class, rng);
      st.policy_loss = reinforce_step(net, opt, b, cfg.lr, cfg.entropy_coef,
                                      cfg.max_grad_norm);
      ++st.minibatches;
    } else {
      const std::vector<int> idx = shuffled_indices(buffer.size(), rng);
      const int n = static_cast<int>(buffer.size());
      for (int start = 0; start < n; start += cfg.batch_size) {
        TransitionBatch b;
        for (int j = start; j < std::min(n, start + cfg.batch_size); ++j)
          b.items.push_back(buffer[idx[j]]);
        st.policy_loss = reinforce_step(net, opt, b, cfg.lr, cfg.entropy_coef,
                                        cfg.max_grad_norm);
        ++st.minibatches;
      }
    }
  }
  st.entropy = mean_entropy(net, buffer, 256);
  return st;
}

UpdateStats ppo_update(net::PolicyNet& net, net::AdamState& popt,
                       ValueNet& vnet, net::AdamState& vopt,
                       std::vector<Episode>& episodes,
                       const config::TrainConfig& cfg, std::mt19937_64& rng) {
  for (Episode& ep : episodes) {
    const std::size_t steps = ep.steps.size();
    Vec r(steps), v(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      r[t] = ep.steps[t].reward;
      v[t] = ep.steps[t].value;
    }
    const Vec adv = gae_advantages(r, v, cfg.gamma, cfg.gae_lambda);
    const Vec g = compute_returns(r, cfg.gamma);
    for (std::size_t t = 0; t < steps; ++t) {
      ep.steps[t].advantage = adv[t];
      ep.steps[t].value_target = adv[t] + v[t];
      ep.steps[t].ret = g[t];
    }
  }
  std::vector<Transition> buffer = flatten(episodes);
  if (cfg.standardize)
    standardize_field(
        buffer, [](const Transition& t) { return t.advantage; },
        [](Transition& t, double v) { t.advantage = v; });

  UpdateStats st;
  const int n = static_cast<int>(buffer.size());
  for (int pass = 0; pass < cfg.repeat_per_collect; ++pass) {
    const std::vector<int> idx = shuffled_indices(buffer.size(), rng);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int stop = std::min(n, start + cfg.batch_size);
      const int m = stop - start;
      const double inv_m = 1.0 / m;

      std::vector<Vec> states;
      states.reserve(m);
      for (int j = start; j < stop; ++j) states.push_back(buffer[idx[j]].obs);
      net::ForwardCache cache = net::forward_batch(net, states);
      net::ForwardCache vcache = net::forward_batch(vnet, states);

      double surr = 0.0, ent = 0.0, vloss = 0.0;
      std::vector<Vec> dlogits(m), dvlogits(m);
      for (int i = 0; i < m; ++i) {
        const Transition& t = buffer[idx[start + i]];
        Vec dterm;
        surr += inv_m * clipped_term(cache.logits[i], t.action, t.advantage,
                                     t.old_log_prob, cfg.clip_eps, &dterm);
        Vec d(net.k(), 0.0);
        axpy(-inv_m, dterm, d);
        ent += inv_m * entropy(cache.probs[i]);
        add_entropy_grad(cache.probs[i], cfg.entropy_coef * inv_m, d);
        dlogits[i] = std::move(d);

        const double v = vcache.logits[i][0];
        const double err = v - t.value_target;
        vloss += inv_m * err * err;
        dvlogits[i] = Vec{2.0 * err * cfg.value_coef * inv_m};
      }

      net::GradientTape ptape = net::backward(net, cache, dlogits);
      ptape.loss = -surr - cfg.entropy_coef * ent;
      if (cfg.max_grad_norm > 0.0) net::clip_tape_norm(ptape, cfg.max_grad_norm);
      net::adam_step(net, ptape, popt, cfg.lr);

      net::GradientTape vtape = net::backward(vnet, vcache, dvlogits);
      vtape.loss = cfg.value_coef * vloss;
      if (cfg.max_grad_norm > 0.0) net::clip_tape_norm(vtape, cfg.max_grad_norm);
      net::adam_step(vnet, vtape, vopt, cfg.lr_value);

      st.policy_loss = ptape.loss;
      st.value_loss = vloss;
      st.entropy = ent;
      ++st.minibatches;
    }
    st.kl = mean_kl_old_new(net, buffer);
    if (st.kl > kKlLimit) {
      st.kl_stopped = true;
      break;
    }
  }
  return st;
}

metrics::CollapseReport collapse_exact_grid(const net::PolicyNet& net,
                                            const envs::IdealCliffWorld& env,
                                            int epoch) {
  const std::map<int, int> oracle = envs::optimal_policy(env);
  metrics::ActivationSet a;
  a.per_class.resize(net.k());
  for (int cell = 0; cell < envs::IdealCliffWorld::kCells; ++cell) {
    const net::ForwardResult f =
        net::forward(net, envs::IdealCliffWorld::one_hot(cell));
    a.add(oracle.at(cell), f.h);
  }
  return metrics::collapse_report(a, head_rows(net), epoch, false);
}

metrics::CollapseReport collapse_sampled(const net::PolicyNet& net,
                                         const std::vector<Vec>& observations,
                                         int epoch) {
  metrics::ActivationSet a;
  a.per_class.resize(net.k());
  for (const Vec& obs : observations) {
    const net::ForwardResult f = net::forward(net, obs);
    a.add(argmax(f.probs), f.h);
  }
  return metrics::collapse_report(a, head_rows(net), epoch, true);
}

RunArtifact run_experiment(const config::TrainConfig& cfg,
                           const EpochCallback& on_epoch) {
  config::validate(cfg);
  auto train_env = config::make_env(cfg.env);
  auto eval_env = config::make_env(cfg.env);
  const int num_actions = train_env->action_count();
  const int obs_dim = train_env->obs_dim();

  std::mt19937_64 net_rng(mix_seed(cfg.seed, 11));
  net::PolicyNet policy = net::make_net(obs_dim, cfg.hidden, num_actions, net_rng);
  if (cfg.acpg) {
    const etf::EtfMatrix m = etf::generate_etf(
        num_actions, cfg.hidden.back(), cfg.ew, mix_seed(cfg.seed, 13));
    net::freeze_etf_head(policy, m);
  }
  if (cfg.eh_clip > 0.0) policy.activation_cap = cfg.eh_clip;
  net::AdamState popt = net::make_adam_state(policy);

  const bool ppo = cfg.algo == "ppo";
  ValueNet vnet;
  net::AdamState vopt;
  if (ppo) {
    std::mt19937_64 vrng(mix_seed(cfg.seed, 12));
    vnet = make_value_net(obs_dim, cfg.hidden, vrng);
    vopt = net::make_adam_state(vnet);
  }

  auto* cliff = dynamic_cast<envs::IdealCliffWorld*>(train_env.get());
  std::map<int, int> oracle;
  if (cliff) oracle = envs::optimal_policy(*cliff);

  std::mt19937_64 sample_rng(mix_seed(cfg.seed, 17));
  std::mt19937_64 update_rng(mix_seed(cfg.seed, 19));
  std::mt19937_64 eval_rng(mix_seed(cfg.seed, 23));
  std::uint64_t episode_counter = 0;

  RunArtifact art;
  art.cfg = cfg;
  std::vector<double> eval_means;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRow row;
    row.epoch = epoch;
    // Collect/update cycles until the per-epoch step budget is met.
    int epoch_steps = 0;
    std::vector<Vec> obs_sample;  // for the sampled collapse report
    do {
      std::vector<Episode> episodes(cfg.episodes_per_collect);
      for (Episode& ep : episodes) {
        Vec obs =
            train_env->reset(mix_seed(cfg.seed, 1000000ULL + episode_counter++));
        while (true) {
          Transition t;
          t.obs = obs;
          const net::ForwardResult f = net::forward(policy, obs);
          t.old_probs = f.probs;
          if (ppo) t.value = value_of(vnet, obs);
          if (cliff) t.class_label = oracle.at(cliff->state());
          t.action = select_action(f.probs, cfg.epsilon, sample_rng);
          t.old_log_prob = log_prob_from_logits(f.logits, t.action);
          const envs::StepResult sr = train_env->step(t.action);
          t.reward = sr.reward;
          ep.total_reward += sr.reward;
          ep.steps.push_back(std::move(t));
          if (sr.done) break;
          obs = sr.obs;
        }
        epoch_steps += static_cast<int>(ep.steps.size());
        for (const Transition& t : ep.steps) {
          if (obs_sample.size() >= 512) break;
          obs_sample.push_back(t.obs);
        }
      }
      row.stats = ppo
                      ? ppo_update(policy, popt, vnet, vopt, episodes, cfg, update_rng)
                      : reinforce_update(policy, popt, episodes, cfg, update_rng);
    } while (epoch_steps < cfg.steps_per_epoch);

    std::vector<double> totals(cfg.eval_episodes);
    for (int i = 0; i < cfg.eval_episodes; ++i) {
      Vec obs = eval_env->reset(
          mix_seed(cfg.seed, 2000000ULL + 1024ULL * epoch + i));
      double total = 0.0;
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::uniform_int_distribution<int> pick(0, num_actions - 1);
      while (true) {
        // Evaluate the agent as deployed: greedy action, perturbed by the
        // same exploration rate the agent runs with.
        int a = argmax(net::forward(policy, obs).probs);
        if (cfg.epsilon > 0.0 && u01(eval_rng) < cfg.epsilon) a = pick(eval_rng);
        const envs::StepResult sr = eval_env->step(a);
        total += sr.reward;
        if (sr.done) break;
        obs = sr.obs;
      }
      totals[i] = total;
    }
    std::tie(row.reward_mean, row.reward_std) = mean_std(totals);
    eval_means.push_back(row.reward_mean);
    const int win = std::min<int>(5, static_cast<int>(eval_means.size()));
    double ma = 0.0;
    for (int i = 0; i < win; ++i) ma += eval_means[eval_means.size() - 1 - i];
    row.stop_flag = ma / win >= cfg.stop_threshold;

    if (cliff) {
      row.collapse = collapse_exact_grid(policy, *cliff, epoch);
    } else {
      row.collapse = collapse_sampled(policy, obs_sample, epoch);
    }

    art.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }

  art.best = art.rows.front().reward_mean;
  for (const EpochRow& row : art.rows) art.best = std::max(art.best, row.reward_mean);
  art.final_reward = art.rows.back().reward_mean;
  art.final_std = art.rows.back().reward_std;
  art.stop_epoch = cfg.epochs;
  for (const EpochRow& row : art.rows) {
    if (row.stop_flag) {
      art.stop_epoch = row.epoch;
      art.threshold_reached = true;
      break;
    }
  }
  art.policy_json = net::to_json(policy);
  if (ppo) art.value_json = net::to_json(vnet);
  return art;
}

std::string metrics_csv_header() {
  return "# schema 1\n"
         "epoch,reward_mean,reward_std,stop_flag,equinorm_h,equinorm_w,"
         "equiang_std_h,equiang_std_w,maxangle_h,maxangle_w,within_var,"
         "self_duality,valid,sampled\n";
}

std::string metrics_csv_row(const EpochRow& row) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  const metrics::CollapseReport& c = row.collapse;
  ss << row.epoch << ',' << row.reward_mean << ',' << row.reward_std << ','
     << (row.stop_flag ? 1 : 0) << ',' << c.equinorm_h << ',' << c.equinorm_w
     << ',' << c.equiang_std_h << ',' << c.equiang_std_w << ',' << c.maxangle_h
     << ',' << c.maxangle_w << ',' << c.within_var << ',' << c.self_duality
     << ',' << (c.valid ? 1 : 0) << ',' << (c.sampled ? 1 : 0) << '\n';
  return ss.str();
}

std::string run_json(const RunArtifact& art) {
  int kl_stops = 0;
  for (const EpochRow& row : art.rows) kl_stops += row.stats.kl_stopped ? 1 : 0;
  json j;
  j["schema"] = 1;
  j["config"] = json::parse(config::serialize_config(art.cfg));
  j["summary"] = {{"best", art.best},
                  {"final", art.final_reward},
                  {"final_std", art.final_std},
                  {"stop_epoch", art.stop_epoch},
                  {"threshold_reached", art.threshold_reached},
                  {"epochs_run", art.rows.size()},
                  {"kl_stops", kl_stops}};
  return j.dump(2);
}

void write_artifact(const RunArtifact& art, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::string csv = metrics_csv_header();
  for (const EpochRow& row : art.rows) csv += metrics_csv_row(row);
  write_file(fs::path(out_dir) / "metrics.csv", csv);
  write_file(fs::path(out_dir) / "run.json", run_json(art));
  write_file(fs::path(out_dir) / "policy.json", art.policy_json);
  if (!art.value_json.empty())
    write_file(fs::path(out_dir) / "value.json", art.value_json);
}

}  // namespace acpg::pg
