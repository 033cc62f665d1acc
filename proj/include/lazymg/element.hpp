#pragma once

#include <concepts>

#include "lazymg/mesh.hpp"
#include "lazymg/problem.hpp"
#include "lazymg/types.hpp"

namespace lazymg {

struct ElementMatrix {
    Mat4 m;
    int n = 0;  // provenance: subcell sampling used
};

/// Exact integral of grad(phi_i).grad(phi_j) over the axis-aligned
/// subrectangle [a,b]x[c,d] of the reference unit square, bilinear shapes.
/// In 2D the physical cell size cancels.
Mat4 reference_subcell_stiffness(double a, double b, double c, double d);

/// Bilinear stiffness matrix of the unit cell for eps = 1:
/// (1/6) [[4,-1,-2,-1],[-1,4,-1,-2],[-2,-1,4,-1],[-1,-2,-1,4]].
const Mat4& unit_stiffness();

struct CellBox {
    double x0 = 0.0, y0 = 0.0, h = 1.0;
};

inline CellBox cell_box(const Mesh& mesh, const Cell& c) {
    double h = mesh.level_h(c.level);
    return {c.cx * h, c.cy * h, h};
}

/// n x n subcell integration: eps sampled once per subsquare centre, the
/// per-subsquare contribution integrated analytically. Deterministic.
template <typename Eps>
    requires std::invocable<Eps, double, double>
ElementMatrix integrate_element(const CellBox& box, const Eps& eps, int n) {
    ElementMatrix out;
    out.n = n;
    double inv = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double e = eps(box.x0 + (i + 0.5) * inv * box.h, box.y0 + (j + 0.5) * inv * box.h);
            out.m += e * reference_subcell_stiffness(i * inv, (i + 1) * inv, j * inv, (j + 1) * inv);
        }
    }
    return out;
}

/// Scatter the element-matrix row of `corner` into the 9-point stencil
/// around that corner vertex.
void scatter_row(const Mat4& element, int corner, Stencil9& stencil);

}  // namespace lazymg
