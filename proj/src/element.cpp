#include "lazymg/element.hpp"

namespace lazymg {

namespace {

// integral over [a,b] of L_si(t) * L_sj(t), with L_0 = 1-t, L_1 = t
double seg_int(int si, int sj, double a, double b) {
    double a0 = si ? 0.0 : 1.0, a1 = si ? 1.0 : -1.0;
    double b0 = sj ? 0.0 : 1.0, b1 = sj ? 1.0 : -1.0;
    auto F = [&](double t) {
        return a0 * b0 * t + (a0 * b1 + a1 * b0) * t * t / 2.0 + a1 * b1 * t * t * t / 3.0;
    };
    return F(b) - F(a);
}

}  // namespace

Mat4 reference_subcell_stiffness(double a, double b, double c, double d) {
    Mat4 K;
    for (int i = 0; i < kCorners; ++i) {
        for (int j = 0; j < kCorners; ++j) {
            double dXi = corner_dx(i) ? 1.0 : -1.0;
            double dXj = corner_dx(j) ? 1.0 : -1.0;
            double dYi = corner_dy(i) ? 1.0 : -1.0;
            double dYj = corner_dy(j) ? 1.0 : -1.0;
            K(i, j) = dXi * dXj * (b - a) * seg_int(corner_dy(i), corner_dy(j), c, d) +
                      dYi * dYj * (d - c) * seg_int(corner_dx(i), corner_dx(j), a, b);
        }
    }
    return K;
}

const Mat4& unit_stiffness() {
    static const Mat4 k = reference_subcell_stiffness(0.0, 1.0, 0.0, 1.0);
    return k;
}

void scatter_row(const Mat4& element, int corner, Stencil9& stencil) {
    for (int c = 0; c < kCorners; ++c) {
        int dx = corner_dx(c) - corner_dx(corner);
        int dy = corner_dy(c) - corner_dy(corner);
        stencil.at(dx, dy) += element(corner, c);
    }
}

}  // namespace lazymg
