#include "lazymg/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace lazymg {

const char* status_name(RunStatus s) {
    switch (s) {
        case RunStatus::Continue: return "continue";
        case RunStatus::Converged: return "converged";
        case RunStatus::Diverged: return "diverged";
        case RunStatus::Timeout: return "timeout";
    }
    return "unknown";
}

MaterialField ExperimentConfig::material() const {
    if (setup == "theta") return MaterialField::theta_field(theta);
    if (setup == "quadrant") return MaterialField::quadrant(eps_low);
    if (setup == "constant") return MaterialField::constant(eps_constant);
    throw std::runtime_error("unknown setup: " + setup);
}

ProblemInstance ExperimentConfig::problem() const {
    ProblemInstance p;
    p.material = material();
    p.rhs_constant = rhs;
    p.noise_seed = seed;
    return p;
}

SolverConfig ExperimentConfig::solver_config() const {
    SolverConfig c;
    if (solver == "additive")
        c.variant = SolverVariant::plain_additive;
    else if (solver == "adafac-jac")
        c.variant = SolverVariant::adafac_jac;
    else if (solver == "adafac-pi")
        c.variant = SolverVariant::adafac_pi;
    else
        throw std::runtime_error("unknown solver: " + solver);
    c.omega = omega;
    c.target_reduction = target;
    c.divergence_guard = divergence;
    c.max_cycles = max_cycles;
    return c;
}

MultilevelConfig ExperimentConfig::multilevel_config() const {
    MultilevelConfig c;
    if (transfer == "geometric")
        c.transfer = TransferKind::geometric;
    else if (transfer == "boxmg")
        c.transfer = TransferKind::boxmg;
    else
        throw std::runtime_error("unknown transfer: " + transfer);
    if (coarse_recompute == "always")
        c.policy = CoarsePolicy::always;
    else if (coarse_recompute == "ripple")
        c.policy = CoarsePolicy::ripple;
    else
        throw std::runtime_error("unknown coarse-recompute: " + coarse_recompute);
    c.gating = gating;
    return c;
}

AssemblyConfig ExperimentConfig::assembly_config() const {
    AssemblyConfig c;
    if (assembly == "eager")
        c.mode = AssemblyMode::eager;
    else if (assembly == "lazy")
        c.mode = AssemblyMode::lazy;
    else if (assembly == "adaptive")
        c.mode = AssemblyMode::adaptive_sync;
    else if (assembly == "anarchic")
        c.mode = AssemblyMode::anarchic;
    else
        throw std::runtime_error("unknown assembly mode: " + assembly);
    c.termination_c = termination_c;
    return c;
}

SchedulerConfig ExperimentConfig::scheduler_config() const {
    SchedulerConfig c;
    c.workers = workers;
    c.throttle = throttle == 0 ? std::numeric_limits<uint64_t>::max() : throttle;
    return c;
}

AmrConfig ExperimentConfig::amr_config() const {
    AmrConfig c;
    c.enabled = amr;
    c.fraction = amr_fraction;
    c.interval = amr_interval;
    c.max_depth = amr_max_depth;
    c.max_events = amr_max_events;
    return c;
}

std::map<std::string, std::string> ExperimentConfig::to_keys() const {
    auto num = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::map<std::string, std::string> k;
    k["setup"] = setup;
    k["eps"] = num(eps_constant);
    k["theta"] = num(theta);
    k["eps-low"] = num(eps_low);
    k["rhs"] = num(rhs);
    k["seed"] = std::to_string(seed);
    k["depth"] = std::to_string(depth);
    k["solver"] = solver;
    k["omega"] = num(omega);
    k["target"] = num(target);
    k["divergence"] = num(divergence);
    k["max-cycles"] = std::to_string(max_cycles);
    k["assembly"] = assembly;
    k["termination-c"] = num(termination_c);
    k["transfer"] = transfer;
    k["coarse-recompute"] = coarse_recompute;
    k["gating"] = gating ? "on" : "off";
    k["compression-threshold"] = num(compression_threshold);
    k["workers"] = std::to_string(workers);
    k["throttle"] = std::to_string(throttle);
    k["amr"] = amr ? "on" : "off";
    k["amr-fraction"] = num(amr_fraction);
    k["amr-interval"] = std::to_string(amr_interval);
    k["amr-max-depth"] = std::to_string(amr_max_depth);
    k["amr-max-events"] = std::to_string(amr_max_events);
    k["forced-task-fraction"] = num(forced_task_fraction);
    k["forced-task-n"] = std::to_string(forced_task_n);
    k["timing"] = timing ? "on" : "off";
    k["rng"] = "splitmix64";
    return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    auto on = [&] {
        if (value == "on" || value == "true" || value == "1") return true;
        if (value == "off" || value == "false" || value == "0") return false;
        throw std::runtime_error("expected on/off for key " + key);
    };
    if (key == "setup") setup = value;
    else if (key == "eps") eps_constant = std::stod(value);
    else if (key == "theta") theta = std::stod(value);
    else if (key == "eps-low") eps_low = std::stod(value);
    else if (key == "rhs") rhs = std::stod(value);
    else if (key == "seed") seed = std::stoull(value);
    else if (key == "depth") depth = std::stoi(value);
    else if (key == "solver") solver = value;
    else if (key == "omega") omega = std::stod(value);
    else if (key == "target") target = std::stod(value);
    else if (key == "divergence") divergence = std::stod(value);
    else if (key == "max-cycles") max_cycles = std::stoi(value);
    else if (key == "assembly") assembly = value;
    else if (key == "termination-c") termination_c = std::stod(value);
    else if (key == "transfer") transfer = value;
    else if (key == "coarse-recompute") coarse_recompute = value;
    else if (key == "gating") gating = on();
    else if (key == "compression-threshold") compression_threshold = std::stod(value);
    else if (key == "workers") workers = std::stoi(value);
    else if (key == "throttle") throttle = std::stoull(value);
    else if (key == "amr") amr = on();
    else if (key == "amr-fraction") amr_fraction = std::stod(value);
    else if (key == "amr-interval") amr_interval = std::stoi(value);
    else if (key == "amr-max-depth") amr_max_depth = std::stoi(value);
    else if (key == "amr-max-events") amr_max_events = std::stoi(value);
    else if (key == "forced-task-fraction") forced_task_fraction = std::stod(value);
    else if (key == "forced-task-n") forced_task_n = std::stoi(value);
    else if (key == "timing") timing = on();
    else if (key == "csv") csv = value;
    else if (key == "rng") { /* informational */ }
    else throw std::runtime_error("unknown config key: " + key);
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        auto strip = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r");
            auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string rest = strip(line);
        if (rest.empty()) continue;
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));
        cfg.set(key, value);
    }
    return cfg;
}

int ExperimentResult::exit_code() const {
    switch (status) {
        case RunStatus::Converged: return 0;
        case RunStatus::Diverged: return 2;
        case RunStatus::Timeout: return 3;
        default: return 1;
    }
}

std::string telemetry_csv(const ExperimentConfig& config,
                          const std::vector<CycleReport>& reports) {
    std::ostringstream out;
    out << "# lazymg telemetry v1\n";
    for (const auto& [k, v] : config.to_keys()) out << "# " << k << " = " << v << "\n";
    out << "cycle,residual,normalized,dof_updates,dof_updates_total,coarse_updates,"
           "pending_tasks,max_n,avg_n,max_samples,factor_totals,factor_mean,enabled_mask,"
           "levels,cells,dofs_fine_interior,grid_points_total,wall_seconds,status\n";
    char buf[512];
    for (const CycleReport& r : reports) {
        std::snprintf(buf, sizeof buf,
                      "%d,%.17g,%.17g,%llu,%llu,%llu,%llu,%d,%.6f,%d,%.6f,%.6f,%u,%d,%llu,%llu,"
                      "%llu,%.6f,%s\n",
                      r.cycle, r.residual, r.normalized,
                      static_cast<unsigned long long>(r.dof_updates),
                      static_cast<unsigned long long>(r.dof_updates_total),
                      static_cast<unsigned long long>(r.coarse_updates),
                      static_cast<unsigned long long>(r.pending_tasks), r.max_n, r.avg_n,
                      r.max_samples, r.factor_totals, r.factor_mean, r.enabled_mask, r.levels,
                      static_cast<unsigned long long>(r.cells),
                      static_cast<unsigned long long>(r.dofs_fine_interior),
                      static_cast<unsigned long long>(r.grid_points_total), r.wall_seconds,
                      status_name(r.status));
        out << buf;
    }
    return out.str();
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    Mesh mesh = build_initial_mesh(config.depth);
    ProblemInstance problem = config.problem();
    CellStream stream(mesh, problem.material, config.compression_threshold);
    TaskPool pool(config.scheduler_config());
    Assembler assembler(stream, config.assembly_config(), pool);
    AdditiveSolver solver(mesh, stream, assembler, pool, problem, config.solver_config(),
                          config.multilevel_config());
    init_noise(mesh, problem);

    if (config.forced_task_fraction > 0.0) {
        solver.on_cycle_start = [&config, &mesh, &assembler] {
            for (std::size_t id = 0; id < mesh.cell_count(); ++id) {
                const Cell& c = mesh.cell(static_cast<int32_t>(id));
                if (c.refined) continue;
                double roll = static_cast<double>(splitmix64(0x6f4ce1a3u ^ id) >> 11) * 0x1.0p-53;
                if (roll < config.forced_task_fraction)
                    assembler.spawn_forced(c.id, config.forced_task_n);
            }
        };
    }

    ExperimentResult result;
    result.reports = solver.run_cycles(config.amr_config());
    if (!config.timing)
        for (CycleReport& r : result.reports) r.wall_seconds = 0.0;
    result.status = result.reports.empty() ? RunStatus::Timeout : result.reports.back().status;
    result.tasks_spawned = pool.spawned();
    result.tasks_completed = pool.completed();
    result.per_worker_executed = pool.per_worker_executed();

    if (!config.csv.empty()) {
        std::ofstream out(config.csv);
        if (!out) throw std::runtime_error("cannot write telemetry: " + config.csv);
        out << telemetry_csv(config, result.reports);
    }
    pool.shutdown();
    return result;
}

TelemetryFile read_telemetry(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open telemetry file: " + path);
    TelemetryFile tf;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto eq = line.find('=');
            if (eq != std::string::npos) {
                auto strip = [](std::string s) {
                    auto a = s.find_first_not_of(" \t#");
                    auto b = s.find_last_not_of(" \t\r");
                    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
                };
                tf.keys[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true;  // column header row
            continue;
        }
        CycleReport r;
        std::istringstream ss(line);
        std::string field;
        auto next = [&]() {
            if (!std::getline(ss, field, ',')) throw std::runtime_error("short telemetry row");
            return field;
        };
        r.cycle = std::stoi(next());
        r.residual = std::stod(next());
        r.normalized = std::stod(next());
        r.dof_updates = std::stoull(next());
        r.dof_updates_total = std::stoull(next());
        r.coarse_updates = std::stoull(next());
        r.pending_tasks = std::stoull(next());
        r.max_n = std::stoi(next());
        r.avg_n = std::stod(next());
        r.max_samples = std::stoi(next());
        r.factor_totals = std::stod(next());
        r.factor_mean = std::stod(next());
        r.enabled_mask = static_cast<uint32_t>(std::stoul(next()));
        r.levels = std::stoi(next());
        r.cells = std::stoull(next());
        r.dofs_fine_interior = std::stoull(next());
        r.grid_points_total = std::stoull(next());
        r.wall_seconds = std::stod(next());
        std::string st = next();
        if (st == "converged") r.status = RunStatus::Converged;
        else if (st == "diverged") r.status = RunStatus::Diverged;
        else if (st == "timeout") r.status = RunStatus::Timeout;
        else r.status = RunStatus::Continue;
        tf.rows.push_back(r);
    }
    return tf;
}

std::string emit_table(const std::vector<std::string>& csv_paths) {
    std::vector<TelemetryFile> files;
    std::size_t max_rows = 0;
    for (const std::string& p : csv_paths) {
        files.push_back(read_telemetry(p));
        max_rows = std::max(max_rows, files.back().rows.size());
    }
    std::ostringstream out;
    out << "Cycle";
    for (const TelemetryFile& tf : files) {
        std::string label = tf.keys.count("setup") ? tf.keys.at("setup") : "run";
        if (label == "theta" && tf.keys.count("theta"))
            label = "theta = " + tf.keys.at("theta");
        else if (label == "quadrant" && tf.keys.count("eps-low"))
            label = "eps-low = " + tf.keys.at("eps-low");
        out << " | " << label << ": max{n}  avg n  compression";
    }
    out << "\n";
    char buf[128];
    for (std::size_t i = 0; i < max_rows; ++i) {
        out << (i + 1 < 10 ? "    " : "   ") << (i + 1);
        for (const TelemetryFile& tf : files) {
            if (i < tf.rows.size()) {
                const CycleReport& r = tf.rows[i];
                std::snprintf(buf, sizeof buf, " |        %6d  %5.2f  %11.2f", r.max_n, r.avg_n,
                              r.factor_totals);
                out << buf;
            } else {
                out << " |             -      -            -";
            }
        }
        out << "\n";
    }
    return out.str();
}

std::string compare_runs(const std::string& csv_a, const std::string& csv_b) {
    TelemetryFile a = read_telemetry(csv_a);
    TelemetryFile b = read_telemetry(csv_b);
    for (const char* key : {"setup", "theta", "eps-low", "eps", "depth", "rhs"}) {
        std::string va = a.keys.count(key) ? a.keys.at(key) : "";
        std::string vb = b.keys.count(key) ? b.keys.at(key) : "";
        if (va != vb)
            throw std::runtime_error(std::string("runs solve different problems (") + key +
                                     ": " + va + " vs " + vb + ")");
    }
    auto summarise = [](const TelemetryFile& tf, const std::string& path) {
        nlohmann::json j;
        j["file"] = path;
        double target = tf.keys.count("target") ? std::stod(tf.keys.at("target")) : 1e-10;
        j["target"] = target;
        int cycles_to_target = -1;
        double time_to_target = -1.0, t = 0.0;
        for (const CycleReport& r : tf.rows) {
            t += r.wall_seconds;
            if (cycles_to_target < 0 && r.normalized <= target) {
                cycles_to_target = r.cycle;
                time_to_target = t;
            }
        }
        j["cycles"] = tf.rows.size();
        j["cycles_to_target"] = cycles_to_target;
        j["time_to_target_seconds"] = time_to_target;
        j["total_time_seconds"] = t;
        if (!tf.rows.empty()) {
            j["final_normalized_residual"] = tf.rows.back().normalized;
            j["final_status"] = status_name(tf.rows.back().status);
            j["dof_updates_total"] = tf.rows.back().dof_updates_total;
        }
        return j;
    };
    nlohmann::json j;
    j["a"] = summarise(a, csv_a);
    j["b"] = summarise(b, csv_b);
    return j.dump(2) + "\n";
}

}  // namespace lazymg
