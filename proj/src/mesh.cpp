#include "lazymg/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lazymg {

Mesh::Mesh() {
    level_cells_.resize(1);
    level_vertices_.resize(1);
    cell_map_.resize(1);
    vertex_map_.resize(1);

    Cell root;
    root.id = 0;
    root.level = 0;
    cells_.push_back(root);
    level_cells_[0].push_back(0);
    cell_map_[0][key(0, 0)] = 0;
    for (int c = 0; c < kCorners; ++c)
        cells_[0].corner[c] = create_vertex(0, corner_dx(c), corner_dy(c));
    classify_all();
    assign_slots();
}

int Mesh::level_cells_per_axis(int level) const {
    int n = 1;
    for (int i = 0; i < level; ++i) n *= kRefine;
    return n;
}

std::size_t Mesh::leaf_count() const {
    std::size_t n = 0;
    for (const Cell& c : cells_)
        if (!c.refined) ++n;
    return n;
}

int32_t Mesh::find_cell(int level, int cx, int cy) const {
    if (level < 0 || level > max_level_) return -1;
    auto it = cell_map_[level].find(key(cx, cy));
    return it == cell_map_[level].end() ? -1 : it->second;
}

int32_t Mesh::find_vertex(int level, int ix, int iy) const {
    if (level < 0 || level > max_level_) return -1;
    auto it = vertex_map_[level].find(key(ix, iy));
    return it == vertex_map_[level].end() ? -1 : it->second;
}

int32_t Mesh::create_vertex(int level, int ix, int iy) {
    auto [it, inserted] = vertex_map_[level].try_emplace(key(ix, iy), -1);
    if (!inserted) return it->second;
    Vertex v;
    v.level = level;
    v.ix = ix;
    v.iy = iy;
    int32_t id = static_cast<int32_t>(vertices_.size());
    vertices_.push_back(v);
    level_vertices_[level].push_back(id);
    it->second = id;
    return id;
}

void Mesh::refine_cell(int32_t id) {
    if (cells_[id].refined) return;
    if (cells_.size() + 9 > max_cells_)
        throw resource_error("mesh exceeds the configured cell limit");

    const int child_level = cells_[id].level + 1;
    const int base_cx = cells_[id].cx * kRefine;
    const int base_cy = cells_[id].cy * kRefine;
    if (child_level > max_level_) {
        max_level_ = child_level;
        level_cells_.resize(max_level_ + 1);
        level_vertices_.resize(max_level_ + 1);
        cell_map_.resize(max_level_ + 1);
        vertex_map_.resize(max_level_ + 1);
    }

    cells_[id].refined = true;
    for (int lx = 0; lx < kRefine; ++lx) {
        for (int ly = 0; ly < kRefine; ++ly) {
            Cell child;
            child.level = child_level;
            child.cx = base_cx + lx;
            child.cy = base_cy + ly;
            child.parent = id;
            int32_t cid = static_cast<int32_t>(cells_.size());
            child.id = cid;
            cells_.push_back(child);
            cells_[id].children[lx * 3 + ly] = cid;
            level_cells_[child_level].push_back(cid);
            cell_map_[child_level][key(child.cx, child.cy)] = cid;
            for (int k = 0; k < kCorners; ++k) {
                cells_[cid].corner[k] =
                    create_vertex(child_level, child.cx + corner_dx(k), child.cy + corner_dy(k));
            }
        }
    }
}

void Mesh::apply_refinement(const RefinementDelta& delta) {
    if (delta.empty()) return;
    std::vector<int32_t> todo = delta.refine;
    std::sort(todo.begin(), todo.end());
    for (int32_t id : todo)
        if (!cells_[id].refined) refine_cell(id);
    classify_all();
    assign_slots();
    ++epoch_;
}

void Mesh::classify_level(int level) {
    const int n = level_cells_per_axis(level);
    for (int32_t vid : level_vertices_[level]) {
        Vertex& v = vertices_[vid];
        if (v.ix == 0 || v.iy == 0 || v.ix == n || v.iy == n) {
            v.kind = VertexKind::dirichlet;
            continue;
        }
        int adjacent = 0;
        for (int c = 0; c < kCorners; ++c)
            if (find_cell(level, v.ix - 1 + corner_dx(c), v.iy - 1 + corner_dy(c)) >= 0)
                ++adjacent;
        v.kind = adjacent == kCorners ? VertexKind::interior : VertexKind::hanging;
    }
}

void Mesh::classify_all() {
    for (Vertex& v : vertices_) v.fine_grid = false;
    for (int l = 0; l <= max_level_; ++l) classify_level(l);
    for (const Cell& c : cells_) {
        if (c.refined) continue;
        for (int32_t vid : c.corner) vertices_[vid].fine_grid = true;
    }
}

void Mesh::walk(const std::function<void(const Cell&)>& enter,
                const std::function<void(const Cell&)>& leave) const {
    std::function<void(int32_t)> rec = [&](int32_t id) {
        const Cell& c = cells_[id];
        if (enter) enter(c);
        if (c.refined)
            for (int32_t child : c.children) rec(child);
        if (leave) leave(c);
    };
    rec(0);
}

std::vector<int32_t> Mesh::traverse() const {
    std::vector<int32_t> order;
    order.reserve(cells_.size());
    walk([&](const Cell& c) { order.push_back(c.id); }, nullptr);
    return order;
}

void Mesh::assign_slots() {
    int32_t slot = 0;
    std::function<void(int32_t)> rec = [&](int32_t id) {
        cells_[id].slot = slot++;
        if (cells_[id].refined)
            for (int32_t child : cells_[id].children) rec(child);
    };
    rec(0);
}

std::string Mesh::dump(const std::function<std::array<int, 3>(const Cell&)>& marker) const {
    std::ostringstream out;
    walk(
        [&](const Cell& c) {
            std::array<int, 3> p{0, 0, 8};
            if (marker) p = marker(c);
            out << c.level << ' ' << c.cx << ' ' << c.cy << ' ' << (c.refined ? 1 : 0) << ' '
                << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
        },
        nullptr);
    return out.str();
}

double Mesh::parent_interpolant(int32_t vid) const {
    const Vertex& v = vertices_[vid];
    const int level = v.level;
    if (level == 0) return v.u;
    const int nc = level_cells_per_axis(level - 1);
    // containing coarse cell: on coarse grid lines either side works, but it
    // must exist; scan the <=4 candidates in a fixed order.
    int cx1 = std::min(v.ix / 3, nc - 1);
    int cy1 = std::min(v.iy / 3, nc - 1);
    int cx0 = (v.ix % 3 == 0 && cx1 > 0) ? cx1 - 1 : cx1;
    int cy0 = (v.iy % 3 == 0 && cy1 > 0) ? cy1 - 1 : cy1;
    int32_t host = -1;
    int hx = 0, hy = 0;
    for (int cx : {cx0, cx1}) {
        for (int cy : {cy0, cy1}) {
            int32_t cid = find_cell(level - 1, cx, cy);
            if (cid >= 0 && host < 0) {
                host = cid;
                hx = cx;
                hy = cy;
            }
        }
    }
    if (host < 0) return v.u;  // cannot happen for vertices of existing cells
    double fx = (v.ix - 3.0 * hx) / 3.0;
    double fy = (v.iy - 3.0 * hy) / 3.0;
    double val = 0.0;
    for (int c = 0; c < kCorners; ++c) {
        double w = (corner_dx(c) ? fx : 1.0 - fx) * (corner_dy(c) ? fy : 1.0 - fy);
        if (w == 0.0) continue;
        val += w * vertices_[cells_[host].corner[c]].u;
    }
    return val;
}

void Mesh::interpolate_hanging(int level) {
    if (level == 0) return;
    for (int32_t vid : level_vertices_[level]) {
        Vertex& v = vertices_[vid];
        if (v.kind != VertexKind::hanging) continue;
        v.u = parent_interpolant(vid);
    }
}

void Mesh::inject_solution() {
    for (int l = max_level_; l >= 1; --l) {
        for (int32_t vid : level_vertices_[l - 1]) {
            Vertex& vc = vertices_[vid];
            int32_t fid = find_vertex(l, 3 * vc.ix, 3 * vc.iy);
            if (fid >= 0) vc.u = vertices_[fid].u;
        }
    }
}

void Mesh::estimate_gradients() {
    for (Vertex& v : vertices_) v.grad = 0.0;
    // edge pairs of a cell: (SW,SE), (NW,NE), (SW,NW), (SE,NE)
    static constexpr int kEdges[4][2] = {{0, 1}, {2, 3}, {0, 2}, {1, 3}};
    for (const Cell& c : cells_) {
        if (c.refined) continue;
        double h = level_h(c.level);
        for (auto [a, b] : kEdges) {
            Vertex& va = vertices_[c.corner[a]];
            Vertex& vb = vertices_[c.corner[b]];
            double g = std::fabs(va.u - vb.u) / h;
            va.grad = std::max(va.grad, g);
            vb.grad = std::max(vb.grad, g);
        }
    }
}

Mesh build_initial_mesh(int depth, std::size_t max_cells) {
    if (depth < 1) throw std::invalid_argument("mesh depth must be >= 1");
    {
        // 9^depth leaf cells; refuse configurations that cannot fit
        double cells = 0, level = 1;
        for (int d = 0; d <= depth; ++d, level *= 9) cells += level;
        if (cells > static_cast<double>(max_cells))
            throw resource_error("initial mesh depth exceeds the cell limit");
    }
    Mesh mesh;
    mesh.max_cells_ = max_cells;
    for (int d = 0; d < depth; ++d) {
        std::vector<int32_t> leafs;
        for (const auto& lv : mesh.level_cells_[d]) leafs.push_back(lv);
        for (int32_t id : leafs) mesh.refine_cell(id);
    }
    mesh.classify_all();
    mesh.assign_slots();
    return mesh;
}

RefinementDelta refine_by_gradient(const Mesh& mesh, double fraction) {
    RefinementDelta delta;
    if (fraction <= 0.0 || fraction > 1.0)
        throw std::invalid_argument("refinement fraction must be in (0,1]");

    std::vector<double> values;
    for (const Vertex& v : mesh.vertices_)
        if (v.fine_grid && v.grad > 0.0) values.push_back(v.grad);
    if (values.empty()) return delta;

    std::sort(values.begin(), values.end(), std::greater<>());
    std::size_t count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(values.size()))));
    double threshold = values[std::min(count, values.size()) - 1];

    std::vector<char> marked(mesh.cells_.size(), 0);
    for (std::size_t vid = 0; vid < mesh.vertices_.size(); ++vid) {
        const Vertex& v = mesh.vertices_[vid];
        if (!v.fine_grid || v.grad <= 0.0 || v.grad < threshold) continue;
        for (int c = 0; c < kCorners; ++c) {
            int32_t cid = mesh.find_cell(v.level, v.ix - 1 + corner_dx(c), v.iy - 1 + corner_dy(c));
            if (cid >= 0 && !mesh.cell(cid).refined) marked[cid] = 1;
        }
    }
    for (std::size_t id = 0; id < marked.size(); ++id)
        if (marked[id]) delta.refine.push_back(static_cast<int32_t>(id));

    std::vector<char> stale(mesh.cells_.size(), 0);
    for (int32_t id : delta.refine) {
        int32_t p = mesh.cell(id).parent;
        while (p >= 0 && !stale[p]) {
            stale[p] = 1;
            p = mesh.cell(p).parent;
        }
    }
    for (std::size_t id = 0; id < stale.size(); ++id)
        if (stale[id]) delta.stale_ancestors.push_back(static_cast<int32_t>(id));
    return delta;
}

}  // namespace lazymg
