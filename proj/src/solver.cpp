#include "lazymg/solver.hpp"

#include <chrono>
#include <cmath>

namespace lazymg {

RunStatus check_termination(const std::vector<double>& history, const SolverConfig& config,
                            int cycles_done) {
    if (history.empty()) return RunStatus::Continue;
    double normalized = history.back() / history.front();
    if (normalized <= config.target_reduction) return RunStatus::Converged;
    if (normalized >= config.divergence_guard) return RunStatus::Diverged;
    if (cycles_done >= config.max_cycles) return RunStatus::Timeout;
    return RunStatus::Continue;
}

AdditiveSolver::AdditiveSolver(Mesh& mesh, CellStream& stream, Assembler& assembler,
                               TaskPool& pool, const ProblemInstance& problem,
                               SolverConfig config, MultilevelConfig multilevel)
    : mesh_(&mesh),
      stream_(&stream),
      assembler_(&assembler),
      pool_(&pool),
      problem_(&problem),
      cfg_(config),
      ml_(multilevel) {}

bool AdditiveSolver::level_enabled(int level) const {
    if (level == mesh_->max_level()) return true;  // smoothing always runs
    if (!ml_.gating || last_refinement_cycle_ < 0) return true;
    return cycle_ >= last_refinement_cycle_ + (mesh_->max_level() - level);
}

int32_t AdditiveSolver::lattice_vertex(const Cell& coarse, int lx, int ly) const {
    return mesh_->find_vertex(coarse.level + 1, 3 * coarse.cx + lx, 3 * coarse.cy + ly);
}

bool AdditiveSolver::owns_lattice_vertex(const Cell& coarse, int lx, int ly) const {
    bool bx = lx == 0 || lx == 3;
    bool by = ly == 0 || ly == 3;
    if (!bx && !by) return true;  // patch-interior vertices have one patch
    int32_t best = coarse.id;
    int32_t best_slot = coarse.slot;
    for (int ox = (lx == 0 ? -1 : 0); ox <= (lx == 3 ? 1 : 0); ++ox) {
        for (int oy = (ly == 0 ? -1 : 0); oy <= (ly == 3 ? 1 : 0); ++oy) {
            if (ox == 0 && oy == 0) continue;
            int32_t nb = mesh_->find_cell(coarse.level, coarse.cx + ox, coarse.cy + oy);
            if (nb < 0 || !mesh_->cell(nb).refined) continue;
            if (mesh_->cell(nb).slot < best_slot) {
                best = nb;
                best_slot = mesh_->cell(nb).slot;
            }
        }
    }
    return best == coarse.id;
}

bool AdditiveSolver::recompute_coarse(int32_t id) {
    const Cell& c = mesh_->cell(id);
    PatchMatrices children;
    for (int lx = 0; lx < 3; ++lx) {
        for (int ly = 0; ly < 3; ++ly) {
            int32_t ch = c.child(lx, ly);
            if (!stream_->marker(ch).has_payload()) return false;  // delayed semantics
            children[lx * 3 + ly] = stream_->read_element(ch).m;
        }
    }
    TransferBlock P;
    if (ml_.transfer == TransferKind::boxmg) {
        P = boxmg_prolongation(children).block;
    } else {
        P = geometric_prolongation();
    }
    Mat4 coarse = galerkin_coarse_element(children, P);
    return stream_->publish_coarse(id, coarse, P);
}

void AdditiveSolver::assembly_pass() {
    mesh_->walk(
        [&](const Cell& c) {
            if (c.refined) {
                if (ml_.policy == CoarsePolicy::always) {
                    recompute_coarse(c.id);
                    stream_->take_dirty(c.id);  // consumed implicitly
                } else if (stream_->take_dirty(c.id)) {
                    int32_t id = c.id;
                    bool ok = pool_->spawn({TaskKind::coarse_recompute, id,
                                            [this, id] { recompute_coarse(id); }});
                    if (!ok) stream_->mark_dirty_now(id);
                }
            } else {
                assembler_->request_stencil(c.id);
            }
        },
        nullptr);
}

void AdditiveSolver::init_level_rhs() {
    for (int l = 0; l <= mesh_->max_level(); ++l)
        for (int32_t vid : mesh_->level_vertices(l)) {
            Vertex& v = mesh_->vertex(vid);
            v.fl = 0.0;
            v.diag = 0.0;
        }
    if (problem_->rhs_constant == 0.0) return;
    // nodal load from leaf cells (lumped): f(v) * h^2 / 4 per adjacent leaf
    for (std::size_t id = 0; id < mesh_->cell_count(); ++id) {
        const Cell& c = mesh_->cell(static_cast<int32_t>(id));
        if (c.refined) continue;
        double h = mesh_->level_h(c.level);
        double w = h * h / 4.0;
        for (int32_t vid : c.corner) {
            Vertex& v = mesh_->vertex(vid);
            v.fl += w * problem_->f(v.x(), v.y());
        }
    }
}

void AdditiveSolver::compute_uhat(int level) {
    for (int32_t vid : mesh_->level_vertices(level)) {
        Vertex& v = mesh_->vertex(vid);
        v.uhat = v.u;
    }
    if (level == 0) return;
    for (int32_t cid : mesh_->level_cells(level - 1)) {
        const Cell& c = mesh_->cell(cid);
        if (!c.refined) continue;
        TransferBlock P = stream_->transfer_or_geometric(cid);
        double uc[4];
        for (int k = 0; k < kCorners; ++k) uc[k] = mesh_->vertex(c.corner[k]).u;
        for (int ly = 0; ly < 4; ++ly) {
            for (int lx = 0; lx < 4; ++lx) {
                if (!owns_lattice_vertex(c, lx, ly)) continue;
                int32_t fid = lattice_vertex(c, lx, ly);
                int L = lattice_index(lx, ly);
                double interp = 0.0;
                for (int k = 0; k < kCorners; ++k) interp += P.at(L, k) * uc[k];
                mesh_->vertex(fid).uhat = mesh_->vertex(fid).u - interp;
            }
        }
    }
}

double AdditiveSolver::residual_pass() {
    init_level_rhs();
    for (int l = mesh_->max_level(); l >= 0; --l) {
        compute_uhat(l);
        for (int32_t vid : mesh_->level_vertices(l)) {
            Vertex& v = mesh_->vertex(vid);
            v.r = v.fl;
            v.rhat = v.fl;
        }
        // cell-wise mat-vec accumulation over the level grid
        for (int32_t cid : mesh_->level_cells(l)) {
            const Cell& c = mesh_->cell(cid);
            Mat4 K = stream_->element_or_baseline(cid);
            double u[4], uh[4];
            for (int k = 0; k < kCorners; ++k) {
                const Vertex& vv = mesh_->vertex(c.corner[k]);
                u[k] = vv.u;
                uh[k] = vv.uhat;
            }
            for (int row = 0; row < kCorners; ++row) {
                Vertex& vv = mesh_->vertex(c.corner[row]);
                double au = 0.0, auh = 0.0;
                for (int col = 0; col < kCorners; ++col) {
                    au += K(row, col) * u[col];
                    auh += K(row, col) * uh[col];
                }
                vv.r -= au;
                vv.rhat -= auh;
                vv.diag += K(row, row);
            }
        }
        for (int32_t vid : mesh_->level_vertices(l)) {
            Vertex& v = mesh_->vertex(vid);
            if (v.kind == VertexKind::dirichlet) {
                v.r = 0.0;
                v.rhat = 0.0;
            }
        }
        // restriction embedded in the sweep: fl_{l-1} += P^T rhat_l
        if (l > 0) {
            for (int32_t cid : mesh_->level_cells(l - 1)) {
                const Cell& c = mesh_->cell(cid);
                if (!c.refined) continue;
                TransferBlock P = stream_->transfer_or_geometric(cid);
                for (int ly = 0; ly < 4; ++ly) {
                    for (int lx = 0; lx < 4; ++lx) {
                        if (!owns_lattice_vertex(c, lx, ly)) continue;
                        double rh = mesh_->vertex(lattice_vertex(c, lx, ly)).rhat;
                        if (rh == 0.0) continue;
                        int L = lattice_index(lx, ly);
                        for (int k = 0; k < kCorners; ++k)
                            mesh_->vertex(c.corner[k]).fl += P.at(L, k) * rh;
                    }
                }
            }
        }
    }
    double sq = 0.0;
    for (int l = 0; l <= mesh_->max_level(); ++l) {
        for (int32_t vid : mesh_->level_vertices(l)) {
            const Vertex& v = mesh_->vertex(vid);
            if (v.fine_grid && v.kind == VertexKind::interior) sq += v.r * v.r;
        }
    }
    return std::sqrt(sq);
}

void AdditiveSolver::update_pass(CycleReport& report) {
    const double omega = cfg_.omega;
    for (int l = 0; l <= mesh_->max_level(); ++l)
        for (int32_t vid : mesh_->level_vertices(l)) {
            Vertex& v = mesh_->vertex(vid);
            v.usnap = v.u;
            v.aux = 0.0;
        }

    for (int l = mesh_->max_level(); l >= 0; --l) {
        if (!level_enabled(l)) continue;
        const bool aux_term = cfg_.variant != SolverVariant::plain_additive && l > 0;

        if (aux_term) {
            // clear the coarse aux accumulator
            for (int32_t vid : mesh_->level_vertices(l - 1)) mesh_->vertex(vid).aux = 0.0;

            if (cfg_.variant == SolverVariant::adafac_pi) {
                // R~ = injection of the level residual
                for (int32_t vid : mesh_->level_vertices(l - 1)) {
                    Vertex& vc = mesh_->vertex(vid);
                    int32_t fid = mesh_->find_vertex(l, 3 * vc.ix, 3 * vc.iy);
                    if (fid >= 0) vc.aux = mesh_->vertex(fid).r;
                }
            } else {
                // adafac-jac: R~ = R (Id - omega diag^-1 A); needs A*r on l
                for (int32_t vid : mesh_->level_vertices(l)) mesh_->vertex(vid).aux = 0.0;
                for (int32_t cid : mesh_->level_cells(l)) {
                    const Cell& c = mesh_->cell(cid);
                    Mat4 K = stream_->element_or_baseline(cid);
                    double rr[4];
                    for (int k = 0; k < kCorners; ++k) rr[k] = mesh_->vertex(c.corner[k]).r;
                    for (int row = 0; row < kCorners; ++row) {
                        double ar = 0.0;
                        for (int col = 0; col < kCorners; ++col) ar += K(row, col) * rr[col];
                        mesh_->vertex(c.corner[row]).aux += ar;
                    }
                }
                // smoothed residual, restricted patch-wise
                for (int32_t cid : mesh_->level_cells(l - 1)) {
                    const Cell& c = mesh_->cell(cid);
                    if (!c.refined) continue;
                    TransferBlock P = stream_->transfer_or_geometric(cid);
                    double acc[4] = {0, 0, 0, 0};
                    for (int ly = 0; ly < 4; ++ly) {
                        for (int lx = 0; lx < 4; ++lx) {
                            if (!owns_lattice_vertex(c, lx, ly)) continue;
                            const Vertex& vf = mesh_->vertex(lattice_vertex(c, lx, ly));
                            if (vf.kind == VertexKind::dirichlet) continue;
                            double sres =
                                vf.r - (vf.diag != 0.0 ? omega / vf.diag * vf.aux : 0.0);
                            int L = lattice_index(lx, ly);
                            for (int k = 0; k < kCorners; ++k) acc[k] += P.at(L, k) * sres;
                        }
                    }
                    // accumulate after the sweep to keep writes per patch local
                    for (int k = 0; k < kCorners; ++k) mesh_->vertex(c.corner[k]).aux += acc[k];
                }
            }
        }

        // u_l += S_l r - P (S_{l-1} R~ r)
        if (aux_term) {
            for (int32_t cid : mesh_->level_cells(l - 1)) {
                const Cell& c = mesh_->cell(cid);
                if (!c.refined) continue;
                TransferBlock P = stream_->transfer_or_geometric(cid);
                double caux[4];
                for (int k = 0; k < kCorners; ++k) {
                    const Vertex& vc = mesh_->vertex(c.corner[k]);
                    caux[k] = (vc.kind == VertexKind::interior && vc.diag != 0.0)
                                  ? omega / vc.diag * vc.aux
                                  : 0.0;
                }
                for (int ly = 0; ly < 4; ++ly) {
                    for (int lx = 0; lx < 4; ++lx) {
                        if (!owns_lattice_vertex(c, lx, ly)) continue;
                        Vertex& vf = mesh_->vertex(lattice_vertex(c, lx, ly));
                        if (vf.kind != VertexKind::interior) continue;
                        int L = lattice_index(lx, ly);
                        double p = 0.0;
                        for (int k = 0; k < kCorners; ++k) p += P.at(L, k) * caux[k];
                        vf.u -= p;
                    }
                }
            }
        }
        double damping = cfg_.variant == SolverVariant::plain_additive
                             ? std::pow(omega, mesh_->max_level() - l + 1)
                             : omega;
        for (int32_t vid : mesh_->level_vertices(l)) {
            Vertex& v = mesh_->vertex(vid);
            if (v.kind != VertexKind::interior) continue;
            if (v.diag != 0.0) v.u += damping / v.diag * v.r;
            if (v.fine_grid) {
                report.dof_updates += 1;
            } else {
                report.coarse_updates += 1;
            }
        }
    }
}

void AdditiveSolver::prolong_corrections() {
    for (int l = 1; l <= mesh_->max_level(); ++l) {
        for (int32_t cid : mesh_->level_cells(l - 1)) {
            const Cell& c = mesh_->cell(cid);
            if (!c.refined) continue;
            TransferBlock P = stream_->transfer_or_geometric(cid);
            double delta[4];
            bool any = false;
            for (int k = 0; k < kCorners; ++k) {
                const Vertex& vc = mesh_->vertex(c.corner[k]);
                delta[k] = vc.u - vc.usnap;
                any |= delta[k] != 0.0;
            }
            if (!any) continue;
            for (int ly = 0; ly < 4; ++ly) {
                for (int lx = 0; lx < 4; ++lx) {
                    if (!owns_lattice_vertex(c, lx, ly)) continue;
                    Vertex& vf = mesh_->vertex(lattice_vertex(c, lx, ly));
                    if (vf.kind != VertexKind::interior) continue;
                    int L = lattice_index(lx, ly);
                    double p = 0.0;
                    for (int k = 0; k < kCorners; ++k) p += P.at(L, k) * delta[k];
                    vf.u += p;
                }
            }
        }
    }
}

void AdditiveSolver::finish_cycle_sync() {
    mesh_->inject_solution();
    for (int l = 1; l <= mesh_->max_level(); ++l) mesh_->interpolate_hanging(l);
}

CycleReport AdditiveSolver::step() {
    auto t0 = std::chrono::steady_clock::now();
    ++cycle_;
    stream_->begin_cycle(static_cast<uint32_t>(cycle_));
    pool_->begin_cycle();

    CycleReport report;
    report.cycle = cycle_;

    if (on_cycle_start) on_cycle_start();
    assembly_pass();
    report.residual = residual_pass();
    if (first_residual_ < 0.0) first_residual_ = report.residual > 0.0 ? report.residual : 1.0;
    report.normalized = report.residual / first_residual_;
    history_.push_back(report.residual);
    report.status = check_termination(history_, cfg_, cycle_);

    if (report.status == RunStatus::Continue || report.status == RunStatus::Timeout) {
        update_pass(report);
        prolong_corrections();
        finish_cycle_sync();
    }
    dof_updates_total_ += report.dof_updates;
    report.dof_updates_total = dof_updates_total_;
    report.pending_tasks = pool_->pending_count();

    CompressionStats cs = stream_->compression_stats();
    report.max_n = cs.max_n;
    report.avg_n = cs.avg_n;
    report.max_samples = cs.max_sample_count;
    report.factor_totals = cs.fine_factor_totals;
    report.factor_mean = cs.fine_factor_mean;
    report.levels = mesh_->max_level() + 1;
    report.cells = mesh_->cell_count();
    for (int l = 0; l <= mesh_->max_level() && l < 32; ++l)
        if (level_enabled(l)) report.enabled_mask |= (1u << l);

    uint64_t fine = 0, total = 0;
    for (int l = 0; l <= mesh_->max_level(); ++l) {
        for (int32_t vid : mesh_->level_vertices(l)) {
            const Vertex& v = mesh_->vertex(vid);
            total += 1;
            if (v.fine_grid && v.kind == VertexKind::interior) fine += 1;
        }
    }
    report.dofs_fine_interior = fine;
    report.grid_points_total = total;

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void AdditiveSolver::apply_refinement_now(const RefinementDelta& delta) {
    std::size_t watermark = mesh_->vertex_count();
    mesh_->apply_refinement(delta);
    stream_->on_refinement(delta);
    // new vertices start from the d-linear interpolant of the parent level,
    // coarse levels first so interpolation chains through
    for (int l = 1; l <= mesh_->max_level(); ++l) {
        for (std::size_t vid = watermark; vid < mesh_->vertex_count(); ++vid) {
            Vertex& v = mesh_->vertex(static_cast<int32_t>(vid));
            if (v.level != l) continue;
            if (v.kind == VertexKind::dirichlet)
                v.u = problem_->g(v.x(), v.y());
            else
                v.u = mesh_->parent_interpolant(static_cast<int32_t>(vid));
        }
    }
    last_refinement_cycle_ = cycle_;
}

std::vector<CycleReport> AdditiveSolver::run_cycles(const AmrConfig& amr) {
    std::vector<CycleReport> reports;
    if (assembler_->config().mode == AssemblyMode::eager) assembler_->eager_setup();
    int refinements = 0;
    for (;;) {
        CycleReport rep = step();
        reports.push_back(rep);
        if (rep.status != RunStatus::Continue) break;

        if (amr.enabled && amr.interval > 0 && cycle_ % amr.interval == 0 &&
            (amr.max_events < 0 || refinements < amr.max_events)) {
            mesh_->estimate_gradients();
            RefinementDelta delta = refine_by_gradient(*mesh_, amr.fraction);
            std::erase_if(delta.refine, [&](int32_t id) {
                return mesh_->cell(id).level >= amr.max_depth;
            });
            if (!delta.refine.empty()) {
                apply_refinement_now(delta);
                ++refinements;
            }
        }
    }
    return reports;
}

}  // namespace lazymg
