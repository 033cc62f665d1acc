#include "lazymg/assembly.hpp"

#include <thread>

namespace lazymg {

Assembler::Assembler(CellStream& stream, AssemblyConfig cfg, TaskPool& pool)
    : stream_(&stream), cfg_(cfg), pool_(&pool) {}

AdaptiveOutcome Assembler::adaptive_step(int32_t cell) {
    CellMarker& mk = stream_->marker(cell);
    int32_t p1 = mk.p1.load(std::memory_order_acquire);
    AdaptiveOutcome out;

    if (p1 == CellMarker::kTop) {
        OperatorSnapshot snap = stream_->read_element(cell);
        out.stored = snap.m;
        out.n = snap.n;
        out.converged = true;
        return out;
    }

    const CellBox box = cell_box(stream_->mesh(), stream_->mesh().cell(cell));
    const MaterialField& eps = stream_->material();

    if (p1 == CellMarker::kBottom) {
        ElementMatrix first = integrate_element(box, eps, 1);
        stream_->publish_element(cell, first.m, 1);
        mk.p1.store(1, std::memory_order_release);
        out.stored = stream_->read_element(cell).m;
        out.n = 1;
        out.changed = true;
        return out;
    }

    int n = p1;
    ElementMatrix fresh = integrate_element(box, eps, n + 1);
    OperatorSnapshot old = stream_->read_element(cell);
    double denom = old.m.max_abs();
    double ratio = 0.0;
    if (denom == 0.0) {
        // a zero operator cannot be refined meaningfully; accept
        zero_norm_accepts_.fetch_add(1, std::memory_order_relaxed);
    } else {
        ratio = (fresh.m - old.m).max_abs() / denom;
    }
    if (ratio < cfg_.termination_c) {
        mk.p1.store(CellMarker::kTop, std::memory_order_release);
        out.stored = old.m;
        out.n = old.n;
        out.converged = true;
        return out;
    }
    stream_->publish_element(cell, fresh.m, n + 1);
    mk.p1.store(n + 1, std::memory_order_release);
    out.stored = stream_->read_element(cell).m;
    out.n = n + 1;
    out.changed = true;
    return out;
}

void Assembler::spawn_step_task(int32_t cell) {
    CellMarker& mk = stream_->marker(cell);
    if (mk.p2.exchange(true, std::memory_order_acq_rel)) return;  // lost the flag
    bool accepted = pool_->spawn({TaskKind::integrate, cell, [this, cell] {
                                      adaptive_step(cell);
                                      stream_->marker(cell).p2.store(false,
                                                                     std::memory_order_release);
                                  }});
    if (!accepted) {
        mk.p2.store(false, std::memory_order_release);  // roll back
        rejected_spawns_.fetch_add(1, std::memory_order_relaxed);
    }
}

Mat4 Assembler::request_stencil(int32_t cell) {
    CellMarker& mk = stream_->marker(cell);
    switch (cfg_.mode) {
        case AssemblyMode::eager:
        case AssemblyMode::lazy: {
            // eager precomputes in eager_setup(); cells created by later
            // refinement take the same converge-now path as lazy
            while (!mk.converged()) adaptive_step(cell);
            return stream_->read_element(cell).m;
        }
        case AssemblyMode::adaptive_sync: {
            // block until any in-flight task lands, helping with queued work
            // so a single-worker setup cannot deadlock on its own queue
            while (mk.p2.load(std::memory_order_acquire)) {
                if (!pool_->try_run_one()) std::this_thread::yield();
            }
            if (!mk.converged()) adaptive_step(cell);
            return stream_->read_element(cell).m;
        }
        case AssemblyMode::anarchic: {
            int32_t p1 = mk.p1.load(std::memory_order_acquire);
            if (p1 == CellMarker::kBottom) {
                // the initial stencil computation is not deferred
                adaptive_step(cell);
                spawn_step_task(cell);
                return stream_->read_element(cell).m;
            }
            if (p1 != CellMarker::kTop && !mk.p2.load(std::memory_order_acquire))
                spawn_step_task(cell);
            return stream_->element_or_baseline(cell);
        }
    }
    return stream_->element_or_baseline(cell);
}

void Assembler::eager_setup() {
    Mesh& mesh = stream_->mesh();
    for (int32_t cell : mesh.traverse()) {
        if (mesh.cell(cell).refined) continue;
        CellMarker& mk = stream_->marker(cell);
        while (!mk.converged()) adaptive_step(cell);
    }
}

Stencil9 assemble_vertex_stencil(const Mesh& mesh, const CellStream& stream, int32_t vertex,
                                 bool require_payload) {
    const Vertex& v = mesh.vertex(vertex);
    Stencil9 st;
    for (int c = 0; c < kCorners; ++c) {
        int32_t cid = mesh.find_cell(v.level, v.ix - 1 + corner_dx(c), v.iy - 1 + corner_dy(c));
        if (cid < 0) continue;
        if (require_payload && !stream.marker(cid).has_payload())
            throw protocol_error("adjacent cell has no assembled operator (p1 = bottom)");
        // the vertex sits at the cell corner diagonally opposite to the
        // direction we stepped in
        int corner = (1 - corner_dx(c)) | ((1 - corner_dy(c)) << 1);
        Mat4 m = stream.element_or_baseline(cid);
        scatter_row(m, corner, st);
    }
    return st;
}

void Assembler::spawn_forced(int32_t cell, int fixed_n) {
    CellMarker& mk = stream_->marker(cell);
    if (mk.p2.exchange(true, std::memory_order_acq_rel)) return;
    const CellBox box = cell_box(stream_->mesh(), stream_->mesh().cell(cell));
    MaterialField eps = stream_->material();
    bool accepted = pool_->spawn({TaskKind::integrate, cell, [this, cell, box, eps, fixed_n] {
                                      volatile double sink =
                                          integrate_element(box, eps, fixed_n).m.max_abs();
                                      (void)sink;
                                      stream_->marker(cell).p2.store(false,
                                                                     std::memory_order_release);
                                  }});
    if (!accepted) {
        mk.p2.store(false, std::memory_order_release);
        rejected_spawns_.fetch_add(1, std::memory_order_relaxed);
    }
}

}  // namespace lazymg
