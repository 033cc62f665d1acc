#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "lazymg/experiment.hpp"

using namespace lazymg;

namespace {
ExperimentConfig smoke_config() {
    ExperimentConfig cfg;
    cfg.setup = "constant";
    cfg.depth = 2;
    cfg.max_cycles = 300;
    cfg.timing = false;
    return cfg;
}
}  // namespace

TEST_CASE("config files parse key = value with comments") {
    {
        std::ofstream f("exp_cfg_test.cfg");
        f << "# smoke experiment\n"
          << "setup = quadrant\n"
          << "eps-low = 1e-4   # the jump\n"
          << "depth = 3\n"
          << "assembly = anarchic\n"
          << "gating = off\n"
          << "\n";
    }
    ExperimentConfig cfg = parse_config_file("exp_cfg_test.cfg");
    CHECK(cfg.setup == "quadrant");
    CHECK(cfg.eps_low == 1e-4);
    CHECK(cfg.depth == 3);
    CHECK(cfg.assembly == "anarchic");
    CHECK(!cfg.gating);

    {
        std::ofstream f("exp_cfg_bad.cfg");
        f << "nonsense-key = 1\n";
    }
    CHECK_THROWS(parse_config_file("exp_cfg_bad.cfg"));
    {
        std::ofstream f("exp_cfg_bad2.cfg");
        f << "just some words\n";
    }
    CHECK_THROWS(parse_config_file("exp_cfg_bad2.cfg"));
}

TEST_CASE("config keys round-trip through set()") {
    ExperimentConfig cfg = smoke_config();
    cfg.theta = 64.0;
    cfg.workers = 3;
    ExperimentConfig copy;
    for (const auto& [k, v] : cfg.to_keys()) copy.set(k, v);
    CHECK(copy.to_keys() == cfg.to_keys());
}

TEST_CASE("smoke run converges with exit code zero and full telemetry") {
    ExperimentConfig cfg = smoke_config();
    cfg.csv = "exp_smoke.csv";
    ExperimentResult res = run_experiment(cfg);
    CHECK(res.status == RunStatus::Converged);
    CHECK(res.exit_code() == 0);
    REQUIRE(!res.reports.empty());
    CHECK(res.reports.back().normalized <= 1e-10);

    TelemetryFile tf = read_telemetry("exp_smoke.csv");
    CHECK(tf.rows.size() == res.reports.size());
    CHECK(tf.keys.at("setup") == "constant");
    CHECK(tf.keys.at("rng") == "splitmix64");
    CHECK(tf.rows.back().status == RunStatus::Converged);
    for (std::size_t i = 0; i < tf.rows.size(); ++i) {
        CHECK(tf.rows[i].cycle == static_cast<int>(i + 1));
        CHECK(tf.rows[i].residual == res.reports[i].residual);
    }
}

TEST_CASE("single-worker runs are bit-reproducible") {
    ExperimentConfig cfg = smoke_config();
    cfg.setup = "quadrant";
    cfg.eps_low = 1e-2;
    cfg.assembly = "anarchic";
    cfg.seed = 7;
    ExperimentResult a = run_experiment(cfg);
    ExperimentResult b = run_experiment(cfg);
    std::string csv_a = telemetry_csv(cfg, a.reports);
    std::string csv_b = telemetry_csv(cfg, b.reports);
    CHECK(csv_a == csv_b);
}

TEST_CASE("exit status mirrors the final telemetry row") {
    ExperimentConfig cfg = smoke_config();
    cfg.max_cycles = 3;  // cannot converge that fast
    ExperimentResult res = run_experiment(cfg);
    CHECK(res.status == RunStatus::Timeout);
    CHECK(res.exit_code() == 3);
    CHECK(res.reports.back().status == RunStatus::Timeout);
}

TEST_CASE("compare_runs summarises two runs of the same problem") {
    ExperimentConfig cfg = smoke_config();
    cfg.csv = "exp_cmp_eager.csv";
    cfg.assembly = "eager";
    run_experiment(cfg);
    cfg.csv = "exp_cmp_anarchic.csv";
    cfg.assembly = "anarchic";
    run_experiment(cfg);

    std::string diff = compare_runs("exp_cmp_eager.csv", "exp_cmp_anarchic.csv");
    CHECK(diff.find("cycles_to_target") != std::string::npos);
    CHECK(diff.find("final_status") != std::string::npos);
    CHECK(diff.find("converged") != std::string::npos);

    // identical configs give identical summaries
    std::string same = compare_runs("exp_cmp_eager.csv", "exp_cmp_eager.csv");
    CHECK(same.find("converged") != std::string::npos);
}

TEST_CASE("compare_runs rejects mismatched problems") {
    ExperimentConfig cfg = smoke_config();
    cfg.csv = "exp_cmp_a.csv";
    run_experiment(cfg);
    cfg.setup = "theta";
    cfg.theta = 16.0;
    cfg.max_cycles = 5;
    cfg.csv = "exp_cmp_b.csv";
    run_experiment(cfg);
    CHECK_THROWS(compare_runs("exp_cmp_a.csv", "exp_cmp_b.csv"));
}

TEST_CASE("emit_table prints one row block per cycle with Table-1 columns") {
    ExperimentConfig cfg;
    cfg.setup = "theta";
    cfg.theta = 1.0;
    cfg.depth = 2;
    cfg.max_cycles = 4;
    cfg.timing = false;
    cfg.csv = "exp_table_t1.csv";
    run_experiment(cfg);
    std::string table = emit_table({"exp_table_t1.csv"});
    CHECK(table.find("theta = 1") != std::string::npos);
    CHECK(table.find("max{n}") != std::string::npos);
    CHECK(table.find("128.00") != std::string::npos);
    int lines = static_cast<int>(std::count(table.begin(), table.end(), '\n'));
    CHECK(lines == 5);  // header + 4 cycles
}

TEST_CASE("forced-task fraction spawns background work per cycle") {
    ExperimentConfig cfg = smoke_config();
    cfg.forced_task_fraction = 0.5;
    cfg.forced_task_n = 4;
    cfg.max_cycles = 6;
    ExperimentResult res = run_experiment(cfg);
    CHECK(res.tasks_spawned > 0);
    CHECK(res.tasks_completed == res.tasks_spawned);
}
