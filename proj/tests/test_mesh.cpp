#include <doctest.h>

#include <set>

#include "lazymg/mesh.hpp"
#include "lazymg/problem.hpp"

using namespace lazymg;

namespace {
int count_kind(const Mesh& mesh, int level, VertexKind k) {
    int n = 0;
    for (int32_t vid : mesh.level_vertices(level))
        if (mesh.vertex(vid).kind == k) ++n;
    return n;
}
}  // namespace

TEST_CASE("depth-1 mesh: 9 cells, 16 vertices, 4 interior DoFs") {
    Mesh mesh = build_initial_mesh(1);
    CHECK(mesh.level_cells(1).size() == 9);
    CHECK(mesh.level_vertices(1).size() == 16);
    CHECK(count_kind(mesh, 1, VertexKind::interior) == 4);
    CHECK(count_kind(mesh, 1, VertexKind::dirichlet) == 12);
    CHECK(mesh.leaf_count() == 9);
}

TEST_CASE("per-level counts follow powers of nine") {
    Mesh mesh = build_initial_mesh(3);
    std::size_t want = 1;
    for (int l = 0; l <= 3; ++l, want *= 9) CHECK(mesh.level_cells(l).size() == want);
}

TEST_CASE("depth-5 mesh matches the paper's counting conventions") {
    Mesh mesh = build_initial_mesh(5);
    CHECK(mesh.level_cells(5).size() == 59049);  // 3^10 finest cells
    CHECK(count_kind(mesh, 5, VertexKind::interior) == 242 * 242);  // 58564
}

TEST_CASE("depth-3 finest mesh width is about 0.037") {
    Mesh mesh = build_initial_mesh(3);
    CHECK(mesh.level_h(3) == doctest::Approx(1.0 / 27));
    CHECK(std::fabs(mesh.level_h(3) - 0.037) < 1e-3);
}

TEST_CASE("unreasonable depth raises a resource error") {
    CHECK_THROWS_AS(build_initial_mesh(9), resource_error);
    CHECK_THROWS_AS(build_initial_mesh(0), std::invalid_argument);
}

TEST_CASE("traversal is deterministic pre-order, root first") {
    Mesh mesh = build_initial_mesh(1);
    auto order = mesh.traverse();
    REQUIRE(order.size() == 10);
    CHECK(mesh.cell(order[0]).level == 0);
    for (int i = 1; i < 10; ++i) CHECK(mesh.cell(order[i]).level == 1);
    // children in lexicographic (x-major) order
    for (int i = 1; i < 10; ++i) {
        CHECK(mesh.cell(order[i]).cx == (i - 1) / 3);
        CHECK(mesh.cell(order[i]).cy == (i - 1) % 3);
    }
    CHECK(order == mesh.traverse());
    CHECK(order == mesh.traverse());
}

TEST_CASE("slots strictly increase along the traversal and stay stable") {
    Mesh mesh = build_initial_mesh(2);
    auto order = mesh.traverse();
    for (std::size_t i = 0; i < order.size(); ++i)
        CHECK(mesh.cell(order[i]).slot == static_cast<int32_t>(i));
}

TEST_CASE("refining one cell keeps the stream prefix identical") {
    Mesh mesh = build_initial_mesh(2);
    auto before = mesh.traverse();
    // refine a mid-stream leaf
    int32_t target = before[before.size() / 2];
    if (mesh.cell(target).refined) target = before[before.size() / 2 + 1];
    std::size_t pos = 0;
    while (before[pos] != target) ++pos;

    RefinementDelta delta;
    delta.refine.push_back(target);
    mesh.apply_refinement(delta);
    auto after = mesh.traverse();
    CHECK(after.size() == before.size() + 9);
    for (std::size_t i = 0; i <= pos; ++i) CHECK(before[i] == after[i]);
    // the nine children follow immediately
    for (std::size_t i = 0; i < 9; ++i) CHECK(mesh.cell(after[pos + 1 + i]).parent == target);
    // the remainder is the old suffix
    for (std::size_t i = pos + 1; i < before.size(); ++i) CHECK(after[i + 9] == before[i]);
}

TEST_CASE("level nesting: every child box lies inside its parent") {
    Mesh mesh = build_initial_mesh(4);
    for (std::size_t id = 0; id < mesh.cell_count(); ++id) {
        const Cell& c = mesh.cell(static_cast<int32_t>(id));
        if (c.parent < 0) continue;
        const Cell& p = mesh.cell(c.parent);
        CHECK(c.cx / 3 == p.cx);
        CHECK(c.cy / 3 == p.cy);
        CHECK(c.level == p.level + 1);
    }
}

TEST_CASE("no refinement transitions, no hanging vertices") {
    Mesh mesh = build_initial_mesh(3);
    for (int l = 0; l <= 3; ++l) CHECK(count_kind(mesh, l, VertexKind::hanging) == 0);
}

TEST_CASE("hanging classification equals brute-force adjacency counting") {
    Mesh mesh = build_initial_mesh(2);
    // carve an irregular region
    RefinementDelta delta;
    delta.refine = {mesh.level_cells(2)[4], mesh.level_cells(2)[11], mesh.level_cells(2)[12]};
    mesh.apply_refinement(delta);
    delta.refine = {mesh.level_cells(3)[2]};
    mesh.apply_refinement(delta);

    for (int l = 1; l <= mesh.max_level(); ++l) {
        const int n = mesh.level_cells_per_axis(l);
        // brute force: scan the full level cell list per vertex
        for (int32_t vid : mesh.level_vertices(l)) {
            const Vertex& v = mesh.vertex(vid);
            if (v.ix == 0 || v.iy == 0 || v.ix == n || v.iy == n) {
                CHECK(v.kind == VertexKind::dirichlet);
                continue;
            }
            int adjacent = 0;
            for (int32_t cid : mesh.level_cells(l)) {
                const Cell& c = mesh.cell(cid);
                if ((c.cx == v.ix - 1 || c.cx == v.ix) && (c.cy == v.iy - 1 || c.cy == v.iy))
                    ++adjacent;
            }
            CHECK(v.kind == (adjacent == 4 ? VertexKind::interior : VertexKind::hanging));
        }
    }
}

TEST_CASE("hanging vertex interpolation is d-linear in the coarse values") {
    Mesh mesh = build_initial_mesh(1);
    RefinementDelta delta;
    delta.refine = {mesh.find_cell(1, 0, 0)};
    mesh.apply_refinement(delta);

    // coarse values linear along x: u = ix on level 1
    for (int32_t vid : mesh.level_vertices(1)) {
        Vertex& v = mesh.vertex(vid);
        v.u = v.ix;
    }
    mesh.interpolate_hanging(2);
    // level-2 vertex at one third of the coarse edge
    int32_t h1 = mesh.find_vertex(2, 1, 0);
    REQUIRE(h1 >= 0);
    CHECK(mesh.vertex(h1).kind == VertexKind::dirichlet);  // on the domain boundary
    int32_t h2 = mesh.find_vertex(2, 3, 1);
    REQUIRE(h2 >= 0);
    if (mesh.vertex(h2).kind == VertexKind::hanging)
        CHECK(mesh.vertex(h2).u == doctest::Approx(1.0));  // x-linear field
    int32_t h3 = mesh.find_vertex(2, 1, 3);
    REQUIRE(h3 >= 0);
    CHECK(mesh.vertex(h3).kind == VertexKind::hanging);
    CHECK(mesh.vertex(h3).u == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("gradient refinement: constant solutions yield an empty delta") {
    Mesh mesh = build_initial_mesh(2);
    for (int l = 0; l <= 2; ++l)
        for (int32_t vid : mesh.level_vertices(l)) mesh.vertex(vid).u = 2.5;
    mesh.estimate_gradients();
    CHECK(refine_by_gradient(mesh, 0.1).empty());
}

TEST_CASE("gradient refinement around a spike is local") {
    Mesh mesh = build_initial_mesh(2);
    int32_t spike = mesh.find_vertex(2, 4, 4);
    mesh.vertex(spike).u = 1.0;
    mesh.estimate_gradients();
    RefinementDelta delta = refine_by_gradient(mesh, 0.1);
    // the edge-based estimate marks the spike and its four edge neighbours,
    // so at most the surrounding 4x4 block of cells (minus corners) refines
    CHECK(!delta.refine.empty());
    CHECK(delta.refine.size() <= 12);
    for (int32_t id : delta.refine) {
        const Cell& c = mesh.cell(id);
        CHECK(std::abs(c.cx - 3) <= 2);
        CHECK(std::abs(c.cy - 3) <= 2);
    }
    // ancestors of refined cells are flagged stale
    CHECK(!delta.stale_ancestors.empty());
    for (int32_t id : delta.stale_ancestors) CHECK(mesh.cell(id).refined);
}

TEST_CASE("injection makes coincident vertices agree") {
    Mesh mesh = build_initial_mesh(3);
    ProblemInstance p;
    p.material = MaterialField::constant(1.0);
    p.noise_seed = 9;
    init_noise(mesh, p);
    for (int l = 1; l <= 3; ++l) {
        for (int32_t vid : mesh.level_vertices(l - 1)) {
            const Vertex& vc = mesh.vertex(vid);
            int32_t f = mesh.find_vertex(l, 3 * vc.ix, 3 * vc.iy);
            REQUIRE(f >= 0);
            CHECK(vc.u == mesh.vertex(f).u);
        }
    }
}

TEST_CASE("mesh dump lists one line per cell in stream order") {
    Mesh mesh = build_initial_mesh(1);
    std::string d = mesh.dump([](const Cell&) { return std::array<int, 3>{1, 0, 0}; });
    std::size_t lines = std::count(d.begin(), d.end(), '\n');
    CHECK(lines == mesh.cell_count());
    CHECK(d.substr(0, 12) == "0 0 0 1 1 0 ");
}
