#pragma once

#include <cstdint>
#include <vector>

#include "lazymg/assembly.hpp"
#include "lazymg/mesh.hpp"
#include "lazymg/problem.hpp"
#include "lazymg/scheduler.hpp"
#include "lazymg/stream.hpp"

namespace lazymg {

enum class SolverVariant : uint8_t { plain_additive, adafac_jac, adafac_pi };
enum class TransferKind : uint8_t { geometric, boxmg };
enum class CoarsePolicy : uint8_t { always, ripple };
enum class RunStatus : uint8_t { Continue, Converged, Diverged, Timeout };

struct SolverConfig {
    SolverVariant variant = SolverVariant::adafac_pi;
    double omega = 0.7;               // Jacobi damping
    double target_reduction = 1e-10;  // normalised residual target
    double divergence_guard = 1e2;
    int max_cycles = 500;
};

struct MultilevelConfig {
    TransferKind transfer = TransferKind::geometric;
    CoarsePolicy policy = CoarsePolicy::always;
    bool gating = true;
};

struct AmrConfig {
    bool enabled = false;
    double fraction = 0.1;
    int interval = 2;   // refine every `interval` cycles
    int max_depth = 7;  // leaf cells at this level are not refined further
    int max_events = -1;  // unlimited when negative
};

struct CycleReport {
    int cycle = 0;
    double residual = 0.0;    // l2 over fine-grid interior vertices
    double normalized = 0.0;  // divided by the first cycle's residual
    uint64_t dof_updates = 0;        // fine-grid solution updates this cycle
    uint64_t dof_updates_total = 0;  // cumulative
    uint64_t coarse_updates = 0;     // overhead updates, not on any axis
    uint64_t pending_tasks = 0;
    int max_n = 0;
    double avg_n = 0.0;
    int max_samples = 0;  // samples per axis actually evaluated anywhere
    double factor_totals = 0.0;
    double factor_mean = 0.0;
    uint32_t enabled_mask = 0;  // bit l set = level l correction enabled
    int levels = 0;
    uint64_t cells = 0;
    uint64_t dofs_fine_interior = 0;
    uint64_t grid_points_total = 0;
    double wall_seconds = 0.0;
    RunStatus status = RunStatus::Continue;
};

RunStatus check_termination(const std::vector<double>& residual_history,
                            const SolverConfig& config, int cycles_done);

/// The adaFAC-x additive FAS cycle over the generating system. One step():
/// (1) fine-operator requests per assembly mode with coarse recomputes at
/// cell entry (one level of rippling per cycle), (2) residuals fine-to-coarse
/// with the restriction embedded in the patch sweep, (3) per-level updates
/// with the auxiliary damping term, (4) correction prolongation and
/// injection, (5) hanging-vertex interpolation, (6) telemetry.
class AdditiveSolver {
public:
    AdditiveSolver(Mesh& mesh, CellStream& stream, Assembler& assembler, TaskPool& pool,
                   const ProblemInstance& problem, SolverConfig config,
                   MultilevelConfig multilevel);

    CycleReport step();
    std::vector<CycleReport> run_cycles(const AmrConfig& amr = {});

    /// Optional hook run at the start of every cycle (experiment drivers
    /// use it to emulate extra integration workload).
    std::function<void()> on_cycle_start;

    bool level_enabled(int level) const;
    int cycle() const { return cycle_; }
    uint64_t dof_updates_total() const { return dof_updates_total_; }

    /// Recompute the Ritz-Galerkin matrix and transfer block of a refined
    /// cell from its children; publishes only when the result changed.
    /// Returns false while any child still has p1 = bottom.
    bool recompute_coarse(int32_t cell);

    // individual passes, exposed for tests
    void assembly_pass();
    double residual_pass();  // returns the fine-grid residual norm
    void update_pass(CycleReport& report);
    void prolong_corrections();
    void finish_cycle_sync();

private:
    struct VertexRef {
        int32_t id;
        int corner;
    };

    bool owns_lattice_vertex(const Cell& coarse, int lx, int ly) const;
    int32_t lattice_vertex(const Cell& coarse, int lx, int ly) const;
    void init_level_rhs();
    void compute_uhat(int level);
    void apply_refinement_now(const RefinementDelta& delta);

    Mesh* mesh_;
    CellStream* stream_;
    Assembler* assembler_;
    TaskPool* pool_;
    const ProblemInstance* problem_;
    SolverConfig cfg_;
    MultilevelConfig ml_;

    int cycle_ = 0;
    double first_residual_ = -1.0;
    std::vector<double> history_;
    uint64_t dof_updates_total_ = 0;
    int last_refinement_cycle_ = -1;
};

}  // namespace lazymg
