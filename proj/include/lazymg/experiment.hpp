#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lazymg/solver.hpp"

namespace lazymg {

/// Flat key = value experiment description; fully determines a run for
/// worker count 1. Parsed from config files (# comments) and CLI overrides.
struct ExperimentConfig {
    // problem
    std::string setup = "constant";  // constant | theta | quadrant
    double eps_constant = 1.0;
    double theta = 1.0;
    double eps_low = 1e-3;
    double rhs = 0.0;
    uint64_t seed = 0;
    int depth = 2;

    // solver
    std::string solver = "adafac-pi";  // additive | adafac-jac | adafac-pi
    double omega = 0.7;
    double target = 1e-10;
    double divergence = 1e2;
    int max_cycles = 500;

    // assembly
    std::string assembly = "adaptive";  // eager | lazy | adaptive | anarchic
    double termination_c = 0.01;

    // multilevel operators
    std::string transfer = "geometric";          // geometric | boxmg
    std::string coarse_recompute = "always";     // always | ripple
    bool gating = true;

    // codec
    double compression_threshold = 1e-8;

    // scheduler
    int workers = 1;
    uint64_t throttle = 0;  // 0 = unlimited

    // AMR
    bool amr = false;
    double amr_fraction = 0.1;
    int amr_interval = 2;
    int amr_max_depth = 7;
    int amr_max_events = -1;

    // scalability experiment knobs
    double forced_task_fraction = 0.0;
    int forced_task_n = 8;

    std::string csv;    // telemetry output path, empty = stdout only summary
    bool timing = true;  // off zeroes the wall-time column (byte-stable CSVs)

    MaterialField material() const;
    ProblemInstance problem() const;
    SolverConfig solver_config() const;
    MultilevelConfig multilevel_config() const;
    AssemblyConfig assembly_config() const;
    SchedulerConfig scheduler_config() const;
    AmrConfig amr_config() const;

    std::map<std::string, std::string> to_keys() const;
    void set(const std::string& key, const std::string& value);
};

ExperimentConfig parse_config_file(const std::string& path);

struct ExperimentResult {
    std::vector<CycleReport> reports;
    RunStatus status = RunStatus::Timeout;
    uint64_t tasks_spawned = 0;
    uint64_t tasks_completed = 0;
    std::vector<uint64_t> per_worker_executed;
    int exit_code() const;
};

/// Execute the configured run and, when config.csv is set, write the
/// telemetry CSV (one row per cycle, `# key = value` preamble).
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string telemetry_csv(const ExperimentConfig& config,
                          const std::vector<CycleReport>& reports);

/// Parsed telemetry file.
struct TelemetryFile {
    std::map<std::string, std::string> keys;
    std::vector<CycleReport> rows;
};
TelemetryFile read_telemetry(const std::string& path);

/// Table-1-style report: per cycle, max n / avg n / compression per run.
std::string emit_table(const std::vector<std::string>& csv_paths);

/// Machine-readable comparison (JSON): cycles/time to target, final error.
/// Throws std::runtime_error when the runs solve different problems.
std::string compare_runs(const std::string& csv_a, const std::string& csv_b);

const char* status_name(RunStatus s);

}  // namespace lazymg
