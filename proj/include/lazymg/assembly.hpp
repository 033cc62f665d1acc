#pragma once

#include <atomic>

#include "lazymg/scheduler.hpp"
#include "lazymg/stream.hpp"

namespace lazymg {

enum class AssemblyMode : uint8_t { eager, lazy, adaptive_sync, anarchic };

struct AssemblyConfig {
    AssemblyMode mode = AssemblyMode::adaptive_sync;
    double termination_c = 0.01;  // C of the marker update rule
};

struct AdaptiveOutcome {
    Mat4 stored;
    int32_t n = 0;
    bool converged = false;
    bool changed = false;  // stored matrix replaced (ripples to the parent)
};

/// The delayed / adaptive / anarchic integration protocol around the cell
/// markers. All state lives in the stream; steps are pure given their inputs
/// and may run on any worker.
class Assembler {
public:
    Assembler(CellStream& stream, AssemblyConfig cfg, TaskPool& pool);

    AssemblyConfig config() const { return cfg_; }

    /// One marker-protocol step:
    ///   p1 = top    -> stored matrix, nothing integrated
    ///   p1 = bottom -> integrate with one centre sample, p1 <- 1
    ///   p1 = n      -> integrate an (n+1)^2 subgrid, compare against the
    ///                  stored matrix in the entrywise max norm; below C the
    ///                  stored matrix stays and p1 <- top, otherwise the new
    ///                  matrix is stored and p1 <- n+1
    AdaptiveOutcome adaptive_step(int32_t cell);

    /// Per-cycle stencil request for a leaf cell, mode dependent. Returns
    /// the matrix the solver must use this cycle.
    Mat4 request_stencil(int32_t cell);

    /// Loop every unconverged leaf cell to p1 = top (classic assembly).
    void eager_setup();

    /// Workload-emulation task for the scalability experiment: integrates at
    /// a fixed n in the background without touching the stored operators.
    void spawn_forced(int32_t cell, int fixed_n);

    uint64_t zero_norm_accepts() const { return zero_norm_accepts_.load(); }
    uint64_t rejected_spawns() const { return rejected_spawns_.load(); }

private:
    void spawn_step_task(int32_t cell);

    CellStream* stream_;
    AssemblyConfig cfg_;
    TaskPool* pool_;
    std::atomic<uint64_t> zero_norm_accepts_{0};
    std::atomic<uint64_t> rejected_spawns_{0};
};

/// Sum the adjacent cells' element-matrix rows of `vertex` into its 9-point
/// stencil; missing cells contribute zero. With require_payload, an adjacent
/// cell still at p1 = bottom raises protocol_error.
Stencil9 assemble_vertex_stencil(const Mesh& mesh, const CellStream& stream, int32_t vertex,
                                 bool require_payload = false);

}  // namespace lazymg
