#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lazymg/types.hpp"

namespace lazymg {

enum class VertexKind : uint8_t { interior, dirichlet, hanging, outside };

/// One vertex of the generating system. Vertices exist per level; spatially
/// coincident vertices on different levels are distinct entries.
struct Vertex {
    int32_t level = 0;
    int32_t ix = 0, iy = 0;  // lattice coordinates on this level, 0..3^level
    VertexKind kind = VertexKind::interior;
    bool fine_grid = false;  // adjacent to at least one leaf cell of this level

    // Solver payload, embedded in the mesh (quasi matrix-free storage).
    double u = 0.0;     // unknown (FAS: full solution on every level)
    double f = 0.0;     // nodal load from the problem rhs
    double fl = 0.0;    // level rhs of the cycle (load or restricted r-hat)
    double r = 0.0;     // residual fl - A u
    double rhat = 0.0;  // hierarchical residual fl - A u-hat
    double uhat = 0.0;  // u - P I u
    double diag = 0.0;  // diagonal accumulator
    double aux = 0.0;   // scratch (A*res products, coarse aux residuals)
    double usnap = 0.0; // snapshot for the correction prolongation
    double grad = 0.0;  // gradient estimate for AMR

    double x() const;
    double y() const;
};

struct Cell {
    int32_t id = 0;
    int32_t level = 0;
    int32_t cx = 0, cy = 0;  // cell coordinates on this level, 0..3^level-1
    int32_t parent = -1;
    std::array<int32_t, 9> children{-1, -1, -1, -1, -1, -1, -1, -1, -1};
    bool refined = false;
    int32_t slot = -1;  // position in the pre-order cell stream
    std::array<int32_t, 4> corner{-1, -1, -1, -1};  // vertex ids (SW,SE,NW,NE)

    // child storage/visit order is lexicographic in (cx,cy): index = lx*3 + ly
    int32_t child(int lx, int ly) const { return children[lx * 3 + ly]; }
};

struct RefinementDelta {
    std::vector<int32_t> refine;           // leaf cells to refine
    std::vector<int32_t> coarsen;          // unused in v1 (no coarsening)
    std::vector<int32_t> stale_ancestors;  // cells whose operators go stale
    bool empty() const { return refine.empty() && coarsen.empty(); }
};

/// Tripartitioned (k=3) spacetree over the unit square. Level 0 is the root
/// cell; every refined cell has exactly 9 children. The per-level grids are
/// nested: each coarse vertex position reappears on every finer level that
/// covers it.
class Mesh {
public:
    static constexpr int kRefine = 3;  // k, fixed

    Mesh();

    int max_level() const { return max_level_; }
    uint64_t epoch() const { return epoch_; }
    std::size_t cell_count() const { return cells_.size(); }
    std::size_t vertex_count() const { return vertices_.size(); }
    std::size_t leaf_count() const;

    const Cell& cell(int32_t id) const { return cells_[id]; }
    Cell& cell(int32_t id) { return cells_[id]; }
    const Vertex& vertex(int32_t id) const { return vertices_[id]; }
    Vertex& vertex(int32_t id) { return vertices_[id]; }

    const std::vector<int32_t>& level_cells(int level) const { return level_cells_[level]; }
    const std::vector<int32_t>& level_vertices(int level) const { return level_vertices_[level]; }

    int32_t find_cell(int level, int cx, int cy) const;
    int32_t find_vertex(int level, int ix, int iy) const;

    double level_h(int level) const { return std::pow(1.0 / kRefine, level); }
    int level_cells_per_axis(int level) const;

    /// Refine one leaf cell into 9 children; creates missing child vertices.
    void refine_cell(int32_t id);

    /// Apply a whole delta, then reclassify and renumber the stream slots.
    void apply_refinement(const RefinementDelta& delta);

    /// Deterministic depth-first pre-order over the spacetree. enter() runs
    /// before the children, leave() after them; children are visited in
    /// lexicographic (x-major) order.
    void walk(const std::function<void(const Cell&)>& enter,
              const std::function<void(const Cell&)>& leave) const;

    /// Pre-order cell id sequence (the cell-stream order).
    std::vector<int32_t> traverse() const;

    /// Recompute vertex kinds and fine-grid flags for every level.
    void classify_all();

    /// Text dump: one line per cell "level x y refined p1 p2 p3" (markers are
    /// supplied by the caller since operator state lives in the stream).
    std::string dump(const std::function<std::array<int, 3>(const Cell&)>& marker) const;

    /// Interpolate hanging-vertex values on `level` d-linearly from level-1.
    void interpolate_hanging(int level);

    /// d-linear interpolant of u at a vertex's position from the coarse
    /// (level-1) cell hosting it.
    double parent_interpolant(int32_t vid) const;

    /// Copy u from fine vertices onto spatially coincident coarse vertices,
    /// finest level downwards.
    void inject_solution();

    /// Max over incident same-level edges of |du|/h, for fine-grid vertices.
    void estimate_gradients();

private:
    friend Mesh build_initial_mesh(int depth, std::size_t max_cells);
    friend RefinementDelta refine_by_gradient(const Mesh& mesh, double fraction);

    int32_t create_vertex(int level, int ix, int iy);
    void assign_slots();
    void classify_level(int level);

    static uint64_t key(int32_t a, int32_t b) {
        return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
               static_cast<uint32_t>(b);
    }

    std::vector<Cell> cells_;
    std::vector<Vertex> vertices_;
    std::vector<std::vector<int32_t>> level_cells_;
    std::vector<std::vector<int32_t>> level_vertices_;
    std::vector<std::unordered_map<uint64_t, int32_t>> cell_map_;
    std::vector<std::unordered_map<uint64_t, int32_t>> vertex_map_;
    int max_level_ = 0;
    uint64_t epoch_ = 0;
    std::size_t max_cells_ = 8'000'000;
};

/// Regular mesh with 3^depth cells per axis on the finest level.
Mesh build_initial_mesh(int depth, std::size_t max_cells = 8'000'000);

/// Select vertices in the top `fraction` quantile of |grad u| and refine
/// their adjacent leaf cells. Gradient estimates must be current
/// (mesh.estimate_gradients()).
RefinementDelta refine_by_gradient(const Mesh& mesh, double fraction);

inline double Vertex::x() const { return ix / std::pow(3.0, level); }
inline double Vertex::y() const { return iy / std::pow(3.0, level); }

}  // namespace lazymg
