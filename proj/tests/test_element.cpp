#include <doctest.h>

#include "lazymg/assembly.hpp"
#include "lazymg/element.hpp"
#include "oracles.hpp"

using namespace lazymg;

TEST_CASE("unit cell, eps=1, n=1 matches the analytic bilinear stiffness") {
    auto one = [](double, double) { return 1.0; };
    ElementMatrix em = integrate_element({0, 0, 1}, one, 1);
    // (1/6) [[4,-1,-2,-1],[-1,4,-1,-2],[-2,-1,4,-1],[-1,-2,-1,4]], corner
    // order SW,SE,NW,NE: the -2 couples diagonally opposite corners
    const double e = 1.0 / 6.0;
    double expected[16] = {4 * e, -e, -e, -2 * e,  -e, 4 * e, -2 * e, -e,
                           -e, -2 * e, 4 * e, -e,  -2 * e, -e, -e, 4 * e};
    for (int i = 0; i < 16; ++i) CHECK(em.m.a[i] == doctest::Approx(expected[i]).epsilon(1e-14));

    Mat4 q = oracle::dense_quadrature_element(0, 0, 1, one, 64);
    for (int i = 0; i < 16; ++i) CHECK(std::fabs(em.m.a[i] - q.a[i]) < 1e-12);
}

TEST_CASE("element integration is linear in a constant eps") {
    auto c = [](double, double) { return 3.7; };
    auto one = [](double, double) { return 1.0; };
    for (int n : {1, 3, 5}) {
        Mat4 a = integrate_element({0.25, 0.5, 0.125}, c, n).m;
        Mat4 b = integrate_element({0.25, 0.5, 0.125}, one, n).m;
        for (int i = 0; i < 16; ++i) CHECK(a.a[i] == doctest::Approx(3.7 * b.a[i]).epsilon(1e-13));
    }
}

TEST_CASE("cell size cancels in 2D") {
    auto one = [](double, double) { return 1.0; };
    Mat4 big = integrate_element({0, 0, 1}, one, 2).m;
    Mat4 small = integrate_element({0.5, 0.25, 1.0 / 27}, one, 2).m;
    for (int i = 0; i < 16; ++i) CHECK(big.a[i] == doctest::Approx(small.a[i]).epsilon(1e-13));
}

TEST_CASE("interface cell: refinement-difference envelope decays with n") {
    // an eps jump crossing the cell away from any sample-symmetric position
    auto jump = [](double x, double) { return x >= 0.537 ? 1.0 : 1e-3; };
    CellBox box{1.0 / 3, 1.0 / 3, 1.0 / 3};
    auto diff = [&](int n) {
        Mat4 a = integrate_element(box, jump, n).m;
        Mat4 b = integrate_element(box, jump, 2 * n).m;
        return (b - a).max_abs();
    };
    // midpoint sampling of a jump jitters, so compare windowed maxima
    double w0 = std::max(diff(1), diff(2));
    double w1 = std::max(diff(4), diff(8));
    double w2 = std::max(diff(16), diff(32));
    CHECK(w1 < w0);
    CHECK(w2 < w1);

    // the quadrant field's jump sits within h/1000 of the cell midpoint, so
    // the sampled matrices stabilise right after n = 1 at this depth
    MaterialField quad = MaterialField::quadrant(1e-3);
    Mat4 a2 = integrate_element(box, quad, 2).m;
    Mat4 a4 = integrate_element(box, quad, 4).m;
    CHECK((integrate_element(box, quad, 1).m - a2).max_abs() > 1e-3);
    CHECK((a4 - a2).max_abs() < 1e-12);
}

TEST_CASE("element matrices are symmetric with zero row sums") {
    MaterialField fields[] = {MaterialField::theta_field(1.0), MaterialField::theta_field(16.0),
                              MaterialField::quadrant(1e-2)};
    for (const auto& f : fields) {
        for (int n : {1, 2, 7}) {
            Mat4 m = integrate_element({2.0 / 9, 5.0 / 9, 1.0 / 9}, f, n).m;
            for (int i = 0; i < 4; ++i) {
                double row = 0.0;
                for (int j = 0; j < 4; ++j) {
                    row += m(i, j);
                    CHECK(std::fabs(m(i, j) - m(j, i)) < 1e-12);
                }
                CHECK(std::fabs(row) < 1e-12);
            }
        }
    }
}

TEST_CASE("assembled interior stencil on a regular eps=1 mesh") {
    Mesh mesh = build_initial_mesh(1);
    CellStream stream(mesh, MaterialField::constant(1.0));
    TaskPool pool;
    Assembler assembler(stream, {AssemblyMode::lazy, 0.01}, pool);
    for (int32_t id : mesh.traverse())
        if (!mesh.cell(id).refined) assembler.request_stencil(id);

    int32_t centre = mesh.find_vertex(1, 1, 1);
    REQUIRE(centre >= 0);
    Stencil9 st = assemble_vertex_stencil(mesh, stream, centre);
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy) {
            double want = (dx == 0 && dy == 0) ? 8.0 / 3.0 : -1.0 / 3.0;
            CHECK(st.at(dx, dy) == doctest::Approx(want).epsilon(1e-12));
        }
    // centre equals the Jacobi diagonal accumulated cell-wise
    double diag = 0.0;
    for (int c = 0; c < kCorners; ++c) {
        int32_t cid = mesh.find_cell(1, 1 - 1 + corner_dx(c), 1 - 1 + corner_dy(c));
        int corner = (1 - corner_dx(c)) | ((1 - corner_dy(c)) << 1);
        diag += stream.read_element(cid).m(corner, corner);
    }
    CHECK(st.centre() == doctest::Approx(diag).epsilon(1e-14));
}

TEST_CASE("vertex stencil with missing neighbours and zero matrices") {
    Mesh mesh = build_initial_mesh(1);
    // delta_max = 0 forces bit-exact storage, so published zeros stay zeros
    CellStream stream(mesh, MaterialField::constant(1.0), 0.0);
    // all-zero element matrices -> zero stencil
    for (int32_t id : mesh.traverse())
        if (!mesh.cell(id).refined) {
            stream.publish_element(id, Mat4{}, 1);
            stream.marker(id).p1.store(1);
        }
    int32_t corner_vertex = mesh.find_vertex(1, 1, 1);
    Stencil9 st = assemble_vertex_stencil(mesh, stream, corner_vertex);
    for (double v : st.s) CHECK(v == 0.0);

    // boundary vertex: missing cells contribute zero, no throw
    int32_t edge = mesh.find_vertex(1, 0, 1);
    CHECK_NOTHROW(assemble_vertex_stencil(mesh, stream, edge));
}

TEST_CASE("vertex stencil protocol error when payload is required") {
    Mesh mesh = build_initial_mesh(1);
    CellStream stream(mesh, MaterialField::constant(1.0));
    int32_t v = mesh.find_vertex(1, 1, 1);
    CHECK_THROWS_AS(assemble_vertex_stencil(mesh, stream, v, true), protocol_error);
}
