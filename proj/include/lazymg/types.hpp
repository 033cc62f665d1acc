#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lazymg {

// Corner order of a cell is fixed throughout: SW, SE, NW, NE.
// corner c -> offset (c & 1, c >> 1) in cell units.
inline constexpr int kCorners = 4;
inline constexpr int corner_dx(int c) { return c & 1; }
inline constexpr int corner_dy(int c) { return c >> 1; }

// A refined cell spans a 4x4 lattice of fine vertices; lattice index
// L = ly*4 + lx with lx, ly in 0..3.
inline constexpr int kPatchLattice = 16;
inline constexpr int lattice_index(int lx, int ly) { return ly * 4 + lx; }

/// 4x4 element matrix, row/col indexed by cell corners (SW,SE,NW,NE).
struct Mat4 {
    std::array<double, 16> a{};

    double& operator()(int r, int c) { return a[r * 4 + c]; }
    double operator()(int r, int c) const { return a[r * 4 + c]; }

    Mat4& operator+=(const Mat4& o) {
        for (int i = 0; i < 16; ++i) a[i] += o.a[i];
        return *this;
    }
    Mat4& operator-=(const Mat4& o) {
        for (int i = 0; i < 16; ++i) a[i] -= o.a[i];
        return *this;
    }
    Mat4& operator*=(double s) {
        for (double& v : a) v *= s;
        return *this;
    }
    friend Mat4 operator-(Mat4 l, const Mat4& r) { return l -= r; }
    friend Mat4 operator+(Mat4 l, const Mat4& r) { return l += r; }
    friend Mat4 operator*(double s, Mat4 m) { return m *= s; }

    double max_abs() const {
        double m = 0.0;
        for (double v : a) m = std::max(m, std::fabs(v));
        return m;
    }
};

/// Assembled 3x3 vertex stencil, index (dy+1)*3 + (dx+1).
struct Stencil9 {
    std::array<double, 9> s{};
    double& at(int dx, int dy) { return s[(dy + 1) * 3 + (dx + 1)]; }
    double at(int dx, int dy) const { return s[(dy + 1) * 3 + (dx + 1)]; }
    double centre() const { return at(0, 0); }
};

/// Cell-local prolongation: 4 coarse corners -> 16 fine lattice vertices.
/// The restriction is its transpose.
struct TransferBlock {
    std::array<double, 64> w{};
    double& at(int lattice, int corner) { return w[lattice * 4 + corner]; }
    double at(int lattice, int corner) const { return w[lattice * 4 + corner]; }
};

struct protocol_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct corrupt_stream_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct resource_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace lazymg
