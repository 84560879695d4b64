#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "acpg/config.hpp"
#include "acpg/pg.hpp"

namespace acpg::sweep {

class SweepError : public std::runtime_error {
 public:
  explicit SweepError(const std::string& what) : std::runtime_error(what) {}
};

// One (epsilon, seed) run of the cross-product. Failures are recorded, not
// propagated, so the other cells keep going.
struct SweepCell {
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double best = 0.0;
  double final_reward = 0.0;
  double final_std = 0.0;  // eval-episode spread within the run
  int stop_epoch = 0;
  bool threshold_reached = false;
};

// Per-epsilon aggregate over the seeds that completed. Means and stds are
// population statistics across seeds; final_std is the across-seed std of the
// final reward (the Final Std column of the results table).
struct SweepRow {
  double epsilon = 0.0;
  int seeds = 0;  // completed cells only
  double best_mean = 0.0, best_std = 0.0;
  double final_mean = 0.0, final_std = 0.0;
  double stop_mean = 0.0, stop_std = 0.0, stop_median = 0.0;
  int reached = 0;  // cells that hit the stop threshold
};

struct SweepResult {
  std::vector<SweepCell> cells;  // in (epsilon, seed) request order
  std::vector<SweepRow> rows;
  bool all_ok = false;
};

using CellCallback = std::function<void(const SweepCell&)>;

// Runs the seeds x epsilons cross-product (epsilons empty = just the config's
// epsilon), fanning out over at most `jobs` threads. Cell order in the result
// is independent of scheduling. on_cell (if set) fires as cells finish, under
// a lock.
SweepResult run_sweep(const config::TrainConfig& base,
                      const std::vector<std::uint64_t>& seeds,
                      const std::vector<double>& epsilons, int jobs,
                      const CellCallback& on_cell = {});

// Pure aggregation of cells into per-epsilon rows; re-running it on stored
// cells reproduces the rows exactly.
std::vector<SweepRow> aggregate(const std::vector<SweepCell>& cells);

std::string cells_csv(const std::vector<SweepCell>& cells);
std::string rows_csv(const std::vector<SweepRow>& rows);

// Writes cells.csv, summary.csv, and sweep.json under out_dir.
void write_sweep(const SweepResult& result, const config::TrainConfig& base,
                 const std::string& out_dir);

}  // namespace acpg::sweep
