#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "acpg/sweep.hpp"
#include "json.hpp"

using namespace acpg;
using sweep::SweepCell;

namespace {

config::TrainConfig tiny_cliff() {
    config::TrainConfig cfg = config::defaults_for("reinforce", "cliff");
    cfg.epochs = 2;
    cfg.episodes_per_collect = 2;
    cfg.eval_episodes = 2;
    cfg.hidden = {8};
    return cfg;
}

}  // namespace

TEST_CASE("empty seed list is a usage error") {
    CHECK_THROWS_AS(sweep::run_sweep(tiny_cliff(), {}, {}, 1), sweep::SweepError);
}

TEST_CASE("cross-product runs every cell in request order") {
    const sweep::SweepResult r =
        sweep::run_sweep(tiny_cliff(), {1, 2}, {0.0, 0.05}, 2);
    REQUIRE(r.cells.size() == 4);
    CHECK(r.all_ok);
    CHECK(r.cells[0].epsilon == 0.0);
    CHECK(r.cells[0].seed == 1);
    CHECK(r.cells[1].seed == 2);
    CHECK(r.cells[2].epsilon == 0.05);
    CHECK(r.cells[3].seed == 2);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].seeds == 2);
    CHECK(r.rows[1].seeds == 2);
}

TEST_CASE("cell results are independent of the thread count") {
    const sweep::SweepResult a = sweep::run_sweep(tiny_cliff(), {3, 4, 5}, {}, 1);
    const sweep::SweepResult b = sweep::run_sweep(tiny_cliff(), {3, 4, 5}, {}, 3);
    CHECK(sweep::cells_csv(a.cells) == sweep::cells_csv(b.cells));
    CHECK(sweep::rows_csv(a.rows) == sweep::rows_csv(b.rows));
}

TEST_CASE("a failing cell is reported without sinking the others") {
    // epsilon 1.5 fails config validation inside the run.
    const sweep::SweepResult r =
        sweep::run_sweep(tiny_cliff(), {1, 2}, {0.0, 1.5}, 2);
    REQUIRE(r.cells.size() == 4);
    CHECK_FALSE(r.all_ok);
    CHECK(r.cells[0].ok);
    CHECK(r.cells[1].ok);
    CHECK_FALSE(r.cells[2].ok);
    CHECK(r.cells[2].error.find("epsilon") != std::string::npos);
    CHECK_FALSE(r.cells[3].ok);
    // The failed epsilon aggregates to an empty row, not a crash.
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[1].seeds == 0);
}

TEST_CASE("aggregation is idempotent on stored cells") {
    const sweep::SweepResult r =
        sweep::run_sweep(tiny_cliff(), {7, 8}, {0.0, 0.1}, 2);
    const auto again = sweep::aggregate(r.cells);
    CHECK(sweep::rows_csv(again) == sweep::rows_csv(r.rows));
}

TEST_CASE("aggregate computes medians for odd and even seed counts") {
    auto cell = [](double eps, int stop) {
        SweepCell c;
        c.epsilon = eps;
        c.ok = true;
        c.stop_epoch = stop;
        return c;
    };
    const auto odd = sweep::aggregate({cell(0, 3), cell(0, 9), cell(0, 5)});
    REQUIRE(odd.size() == 1);
    CHECK(odd[0].stop_median == 5.0);
    const auto even =
        sweep::aggregate({cell(0, 3), cell(0, 11), cell(0, 5), cell(0, 9)});
    CHECK(even[0].stop_median == 7.0);
}

TEST_CASE("cell callback fires once per cell") {
    int fired = 0;
    sweep::run_sweep(tiny_cliff(), {1, 2}, {}, 2,
                     [&](const SweepCell&) { ++fired; });
    CHECK(fired == 2);
}

TEST_CASE("write_sweep lays out the sweep directory") {
    namespace fs = std::filesystem;
    config::TrainConfig cfg = tiny_cliff();
    const sweep::SweepResult r = sweep::run_sweep(cfg, {1, 2}, {0.0, 1.5}, 2);
    const fs::path dir = fs::temp_directory_path() / "acpg_test_sweep";
    fs::remove_all(dir);
    sweep::write_sweep(r, cfg, dir.string());
    CHECK(fs::exists(dir / "cells.csv"));
    CHECK(fs::exists(dir / "summary.csv"));
    std::ifstream sj(dir / "sweep.json");
    std::stringstream ss;
    ss << sj.rdbuf();
    const auto j = nlohmann::json::parse(ss.str());
    CHECK(j["schema"] == 1);
    CHECK(j["all_ok"] == false);
    CHECK(j["failed"] == 2);
    CHECK(j["failures"].size() == 2);
    fs::remove_all(dir);
}
