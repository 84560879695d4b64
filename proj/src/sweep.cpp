#include "acpg/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace acpg::sweep {

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  return {m, std::sqrt(var / n)};
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw SweepError("cannot write " + path.string());
  out << text;
}

}  // namespace

SweepResult run_sweep(const config::TrainConfig& base,
                      const std::vector<std::uint64_t>& seeds,
                      const std::vector<double>& epsilons, int jobs,
                      const CellCallback& on_cell) {
  if (seeds.empty()) throw SweepError("sweep: need at least one seed");
  if (jobs < 1) throw SweepError("sweep: jobs must be >= 1");
  const std::vector<double> eps_list =
      epsilons.empty() ? std::vector<double>{base.epsilon} : epsilons;

  struct Spec {
    double eps;
    std::uint64_t seed;
  };
  std::vector<Spec> specs;
  for (double eps : eps_list)
    for (std::uint64_t seed : seeds) specs.push_back({eps, seed});

  SweepResult result;
  result.cells.resize(specs.size());
  std::atomic<std::size_t> next{0};
  std::mutex cb_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      SweepCell cell;
      cell.epsilon = specs[i].eps;
      cell.seed = specs[i].seed;
      try {
        config::TrainConfig cfg = base;
        cfg.seed = specs[i].seed;
        cfg.epsilon = specs[i].eps;
        const pg::RunArtifact art = pg::run_experiment(cfg);
        cell.ok = true;
        cell.best = art.best;
        cell.final_reward = art.final_reward;
        cell.final_std = art.final_std;
        cell.stop_epoch = art.stop_epoch;
        cell.threshold_reached = art.threshold_reached;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
      result.cells[i] = std::move(cell);
      if (on_cell) {
        std::lock_guard<std::mutex> lock(cb_mutex);
        on_cell(result.cells[i]);
      }
    }
  };

  const int nthreads =
      std::min<int>(jobs, static_cast<int>(specs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  result.rows = aggregate(result.cells);
  result.all_ok = std::all_of(result.cells.begin(), result.cells.end(),
                              [](const SweepCell& c) { return c.ok; });
  return result;
}

std::vector<SweepRow> aggregate(const std::vector<SweepCell>& cells) {
  std::vector<double> eps_order;
  for (const SweepCell& c : cells)
    if (std::find(eps_order.begin(), eps_order.end(), c.epsilon) == eps_order.end())
      eps_order.push_back(c.epsilon);

  std::vector<SweepRow> rows;
  for (double eps : eps_order) {
    SweepRow row;
    row.epsilon = eps;
    std::vector<double> best, fin, stop;
    for (const SweepCell& c : cells) {
      if (c.epsilon != eps || !c.ok) continue;
      best.push_back(c.best);
      fin.push_back(c.final_reward);
      stop.push_back(static_cast<double>(c.stop_epoch));
      row.reached += c.threshold_reached ? 1 : 0;
    }
    row.seeds = static_cast<int>(best.size());
    if (row.seeds > 0) {
      std::tie(row.best_mean, row.best_std) = mean_std(best);
      std::tie(row.final_mean, row.final_std) = mean_std(fin);
      std::tie(row.stop_mean, row.stop_std) = mean_std(stop);
      row.stop_median = median(stop);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string cells_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  ss << "# schema 1\n";
  ss << "epsilon,seed,ok,best,final,final_std,stop_epoch,threshold_reached,error\n";
  for (const SweepCell& c : cells) {
    std::string err = c.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    ss << c.epsilon << ',' << c.seed << ',' << (c.ok ? 1 : 0) << ',' << c.best
       << ',' << c.final_reward << ',' << c.final_std << ',' << c.stop_epoch
       << ',' << (c.threshold_reached ? 1 : 0) << ',' << err << '\n';
  }
  return ss.str();
}

std::string rows_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream ss;
  ss << std::setprecision(17);
  ss << "# schema 1\n";
  ss << "epsilon,seeds,best_mean,best_std,final_mean,final_std,stop_mean,"
        "stop_std,stop_median,reached\n";
  for (const SweepRow& r : rows) {
    ss << r.epsilon << ',' << r.seeds << ',' << r.best_mean << ',' << r.best_std
       << ',' << r.final_mean << ',' << r.final_std << ',' << r.stop_mean << ','
       << r.stop_std << ',' << r.stop_median << ',' << r.reached << '\n';
  }
  return ss.str();
}

void write_sweep(const SweepResult& result, const config::TrainConfig& base,
                 const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "cells.csv", cells_csv(result.cells));
  write_file(fs::path(out_dir) / "summary.csv", rows_csv(result.rows));

  nlohmann::json j;
  j["schema"] = 1;
  j["config"] = nlohmann::json::parse(config::serialize_config(base));
  j["all_ok"] = result.all_ok;
  j["cells"] = result.cells.size();
  int failed = 0;
  nlohmann::json failures = nlohmann::json::array();
  for (const SweepCell& c : result.cells) {
    if (c.ok) continue;
    ++failed;
    failures.push_back({{"epsilon", c.epsilon}, {"seed", c.seed}, {"error", c.error}});
  }
  j["failed"] = failed;
  j["failures"] = failures;
  write_file(fs::path(out_dir) / "sweep.json", j.dump(2));
}

}  // namespace acpg::sweep
