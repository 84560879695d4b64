// Command-line front end: etf-gen / train / sweep / metrics / lpm-verify.
// Verbosity comes from ACPG_LOG (error | info | debug); all randomness flows
// from the --seed/--seeds flags.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "acpg/config.hpp"
#include "acpg/etf.hpp"
#include "acpg/lpm.hpp"
#include "acpg/metrics.hpp"
#include "acpg/net.hpp"
#include "acpg/pg.hpp"
#include "acpg/sweep.hpp"

namespace {

using namespace acpg;
namespace fs = std::filesystem;

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };
LogLevel g_log = LogLevel::kInfo;
std::mutex g_log_mutex;

void log_at(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(g_log)) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::fprintf(stderr, "%s\n", msg.c_str());
}
void log_error(const std::string& m) { log_at(LogLevel::kError, "error: " + m); }
void log_info(const std::string& m) { log_at(LogLevel::kInfo, m); }
void log_debug(const std::string& m) { log_at(LogLevel::kDebug, m); }

// "a..b" inclusive range, or a comma list "1,2,5", or a single number.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t a = std::stoull(text.substr(0, dots));
    const std::uint64_t b = std::stoull(text.substr(dots + 2));
    if (b < a) throw CLI::ValidationError("--seeds", "range end before start");
    for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    return seeds;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
  return seeds;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------------ etf-gen

int cmd_etf_gen(int k, int d, double energy, std::uint64_t seed,
                const std::string& out) {
  const etf::EtfMatrix m = etf::generate_etf(k, d, energy, seed);
  etf::check_invariants(m);
  write_file(out, etf::to_json(m));
  std::ostringstream msg;
  msg << "etf-gen: k=" << k << " d=" << d << " energy=" << energy
      << " gram residual=" << etf::gram_residual(m) << " -> " << out;
  log_info(msg.str());
  return 0;
}

// -------------------------------------------------------------------- train

int cmd_train(const std::string& config_path, const std::string& seeds_text,
              const std::string& out_dir, int jobs) {
  const config::TrainConfig base = config::load_config(config_path);
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
  fs::create_directories(out_dir);

  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      config::TrainConfig cfg = base;
      cfg.seed = seeds[i];
      const fs::path run_dir = fs::path(out_dir) / ("seed_" + std::to_string(seeds[i]));
      fs::create_directories(run_dir);
      // Stream epochs so partial results survive an abort.
      std::ofstream csv(run_dir / "metrics.csv");
      csv << pg::metrics_csv_header() << std::flush;
      try {
        const pg::RunArtifact art =
            pg::run_experiment(cfg, [&](const pg::EpochRow& row) {
              csv << pg::metrics_csv_row(row) << std::flush;
              std::ostringstream dbg;
              dbg << "seed " << seeds[i] << " epoch " << row.epoch << " reward "
                  << row.reward_mean << " +- " << row.reward_std;
              log_debug(dbg.str());
            });
        write_file(run_dir / "run.json", pg::run_json(art));
        write_file(run_dir / "policy.json", art.policy_json);
        if (!art.value_json.empty())
          write_file(run_dir / "value.json", art.value_json);
        std::ostringstream msg;
        msg << "train: seed " << seeds[i] << " best " << art.best << " final "
            << art.final_reward << " stop " << art.stop_epoch;
        log_info(msg.str());
      } catch (const std::exception& e) {
        ++failures;
        log_error("train: seed " + std::to_string(seeds[i]) + ": " + e.what());
      }
    }
  };

  const int nthreads = std::min<int>(std::max(jobs, 1),
                                     static_cast<int>(seeds.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return failures == 0 ? 0 : 1;
}

// -------------------------------------------------------------------- sweep

int cmd_sweep(const std::string& config_path, const std::string& seeds_text,
              const std::string& eps_text, const std::string& out_dir,
              int jobs) {
  const config::TrainConfig base = config::load_config(config_path);
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);
  if (seeds.size() < 2)
    throw CLI::ValidationError("--seeds",
                               "need at least two seeds for spread columns");
  const std::vector<double> epsilons =
      eps_text.empty() ? std::vector<double>{} : parse_doubles(eps_text);

  const sweep::SweepResult result = sweep::run_sweep(
      base, seeds, epsilons, jobs, [&](const sweep::SweepCell& cell) {
        std::ostringstream msg;
        msg << "sweep: eps " << cell.epsilon << " seed " << cell.seed;
        if (cell.ok)
          msg << " best " << cell.best << " stop " << cell.stop_epoch;
        else
          msg << " FAILED: " << cell.error;
        log_info(msg.str());
      });
  sweep::write_sweep(result, base, out_dir);
  log_info("sweep: " + std::to_string(result.cells.size()) + " cells -> " + out_dir);
  if (!result.all_ok) log_error("sweep: some cells failed; see sweep.json");
  return result.all_ok ? 0 : 1;
}

// ------------------------------------------------------------------ metrics

int cmd_metrics(const std::string& activations_path, const std::string& etf_path,
                const std::string& out) {
  const etf::EtfMatrix m = etf::load_json(etf_path);
  std::vector<Vec> w;
  for (int j = 0; j < m.k; ++j) w.push_back(m.column(j));

  metrics::ActivationSet a;
  a.per_class.resize(m.k);
  std::ifstream in(activations_path);
  if (!in) throw std::runtime_error("cannot open " + activations_path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("activations line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    const int cls = j.at("class_k").get<int>();
    if (cls < 0 || cls >= m.k)
      throw std::runtime_error("activations line " + std::to_string(line_no) +
                               ": class_k out of range");
    a.add(cls, j.at("h").get<Vec>());
  }
  log_info("metrics: " + std::to_string(a.total()) + " activations in " +
           std::to_string(m.k) + " classes");

  const metrics::CollapseReport r = metrics::collapse_report(a, w, 0, false);
  nlohmann::json out_j;
  out_j["schema"] = 1;
  out_j["classes"] = m.k;
  out_j["total"] = a.total();
  out_j["equinorm_h"] = r.equinorm_h;
  out_j["equinorm_w"] = r.equinorm_w;
  out_j["equiang_std_h"] = r.equiang_std_h;
  out_j["equiang_std_w"] = r.equiang_std_w;
  out_j["maxangle_h"] = r.maxangle_h;
  out_j["maxangle_w"] = r.maxangle_w;
  out_j["within_var"] = r.within_var;
  out_j["self_duality"] = r.self_duality;
  out_j["valid"] = r.valid;
  write_file(out, out_j.dump(2));
  return r.valid ? 0 : 1;
}

// --------------------------------------------------------------- lpm-verify

int cmd_lpm_verify(int k, int d, double eh, double ew,
                   const std::string& imbalance_text, int iters,
                   std::uint64_t seed, const std::string& out) {
  std::vector<int> class_sizes =
      imbalance_text.empty() ? std::vector<int>(k, 1) : parse_ints(imbalance_text);
  if (static_cast<int>(class_sizes.size()) != k)
    throw CLI::ValidationError("--imbalance",
                               "need exactly k comma-separated sizes");

  const etf::EtfMatrix frame = etf::generate_etf(k, d, ew, mix_seed(seed, 1));
  lpm::LpmProblem p = lpm::make_problem(frame, class_sizes, eh);
  // Random feasible start, well inside the ball.
  std::mt19937_64 rng(mix_seed(seed, 7));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.0, 0.9);
  for (Vec& h : p.acts) {
    for (double& x : h) x = gauss(rng);
    const double n = norm(h);
    if (n > 0.0) scale(h, radius(rng) * std::sqrt(eh) / n);
  }

  const lpm::SolveReport solve = lpm::solve_projected_ascent(
      p, lpm::default_lr(ew), iters);
  const double residual = lpm::theorem1_residual(p.acts, p);
  const double bound = 1e-3 * std::sqrt(eh * ew);

  const std::vector<Vec> closed = lpm::closed_form_activations(p);
  const double closed_residual = lpm::theorem1_residual(closed, p);

  nlohmann::json kkt_rows = nlohmann::json::array();
  bool kkt_ok = true;
  for (int cls = 0; cls < k; ++cls) {
    int state = -1;
    for (int s = 0; s < p.states(); ++s)
      if (p.cls[s] == cls) {
        state = s;
        break;
      }
    const lpm::KktReport r = lpm::kkt_check(closed[state], p, cls);
    const double lambda_rel =
        std::abs(r.lambda_fit - r.lambda) / std::max(1e-300, std::abs(r.lambda));
    kkt_ok = kkt_ok && r.residual < 1e-10 && r.active && lambda_rel < 1e-8;
    kkt_rows.push_back({{"class", cls},
                        {"residual", r.residual},
                        {"lambda", r.lambda},
                        {"lambda_fit", r.lambda_fit},
                        {"a_value", r.a_value},
                        {"a_spread", r.a_spread},
                        {"active", r.active}});
  }

  nlohmann::json j;
  j["schema"] = 1;
  j["k"] = k;
  j["d"] = d;
  j["eh"] = eh;
  j["ew"] = ew;
  j["class_sizes"] = class_sizes;
  j["iterations"] = solve.iterations;
  j["converged"] = solve.converged;
  j["objective"] = solve.objective;
  j["residual"] = residual;
  j["residual_bound"] = bound;
  j["closed_form_residual"] = closed_residual;
  j["kkt"] = kkt_rows;
  const bool ok = residual <= bound && kkt_ok;
  j["ok"] = ok;
  write_file(out, j.dump(2));

  std::ostringstream msg;
  msg << "lpm-verify: k=" << k << " d=" << d << " residual=" << residual
      << " (bound " << bound << ") kkt " << (kkt_ok ? "ok" : "FAILED");
  log_info(msg.str());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* level = std::getenv("ACPG_LOG")) {
    const std::string s(level);
    if (s == "error") g_log = LogLevel::kError;
    else if (s == "info") g_log = LogLevel::kInfo;
    else if (s == "debug") g_log = LogLevel::kDebug;
    else {
      std::fprintf(stderr, "error: ACPG_LOG must be error, info, or debug\n");
      return 2;
    }
  }

  CLI::App app{"Equiangular-head policy-gradient laboratory"};
  app.require_subcommand(1);

  // etf-gen
  auto* etf_cmd = app.add_subcommand("etf-gen", "Generate a frame and write it as JSON");
  int eg_k = 0, eg_d = 0;
  double eg_energy = 1.0;
  std::uint64_t eg_seed = 0;
  std::string eg_out;
  etf_cmd->add_option("--k", eg_k, "number of vectors")->required();
  etf_cmd->add_option("--d", eg_d, "ambient dimension")->required();
  etf_cmd->add_option("--energy", eg_energy, "squared column norm");
  etf_cmd->add_option("--seed", eg_seed, "orientation seed");
  etf_cmd->add_option("--out", eg_out, "output JSON path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one config across seeds");
  std::string tr_config, tr_seeds = "0..0", tr_out;
  int tr_jobs = 1;
  train_cmd->add_option("--config", tr_config, "config JSON path")->required();
  train_cmd->add_option("--seeds", tr_seeds, "seed range a..b or comma list");
  train_cmd->add_option("--out", tr_out, "output directory")->required();
  train_cmd->add_option("--jobs", tr_jobs, "parallel runs");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Seed x epsilon cross-product");
  std::string sw_config, sw_seeds, sw_eps, sw_out;
  int sw_jobs = 1;
  sweep_cmd->add_option("--config", sw_config, "config JSON path")->required();
  sweep_cmd->add_option("--seeds", sw_seeds, "seed range a..b or comma list")->required();
  sweep_cmd->add_option("--epsilons", sw_eps, "comma list of exploration rates");
  sweep_cmd->add_option("--out", sw_out, "output directory")->required();
  sweep_cmd->add_option("--jobs", sw_jobs, "parallel runs");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Collapse report from an activation dump");
  std::string me_acts, me_etf, me_out;
  metrics_cmd->add_option("--activations", me_acts, "JSON-lines activation dump")->required();
  metrics_cmd->add_option("--etf", me_etf, "frame JSON path")->required();
  metrics_cmd->add_option("--out", me_out, "report JSON path")->required();

  // lpm-verify
  auto* lpm_cmd = app.add_subcommand("lpm-verify", "Solve the peeled model and check the optimum");
  int lv_k = 0, lv_d = 0, lv_iters = 50000;
  double lv_eh = 1.0, lv_ew = 1.0;
  std::uint64_t lv_seed = 0;
  std::string lv_imbalance, lv_out;
  lpm_cmd->add_option("--k", lv_k, "number of classes")->required();
  lpm_cmd->add_option("--d", lv_d, "activation dimension")->required();
  lpm_cmd->add_option("--eh", lv_eh, "activation energy budget");
  lpm_cmd->add_option("--ew", lv_ew, "frame column energy");
  lpm_cmd->add_option("--imbalance", lv_imbalance, "comma list of class sizes");
  lpm_cmd->add_option("--iters", lv_iters, "max ascent iterations");
  lpm_cmd->add_option("--seed", lv_seed, "init seed");
  lpm_cmd->add_option("--out", lv_out, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (etf_cmd->parsed())
      return cmd_etf_gen(eg_k, eg_d, eg_energy, eg_seed, eg_out);
    if (train_cmd->parsed()) return cmd_train(tr_config, tr_seeds, tr_out, tr_jobs);
    if (sweep_cmd->parsed())
      return cmd_sweep(sw_config, sw_seeds, sw_eps, sw_out, sw_jobs);
    if (metrics_cmd->parsed()) return cmd_metrics(me_acts, me_etf, me_out);
    if (lpm_cmd->parsed())
      return cmd_lpm_verify(lv_k, lv_d, lv_eh, lv_ew, lv_imbalance, lv_iters,
                            lv_seed, lv_out);
  } catch (const CLI::ValidationError& e) {
    log_error(e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error(e.what());
    return 1;
  }
  return 2;
}
