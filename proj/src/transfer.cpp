#include "lazymg/transfer.hpp"

#include <cmath>

namespace lazymg {

namespace {

TransferBlock make_geometric() {
    TransferBlock P;
    for (int ly = 0; ly < 4; ++ly) {
        for (int lx = 0; lx < 4; ++lx) {
            double fx = lx / 3.0;
            double fy = ly / 3.0;
            int L = lattice_index(lx, ly);
            for (int c = 0; c < kCorners; ++c)
                P.at(L, c) = (corner_dx(c) ? fx : 1.0 - fx) * (corner_dy(c) ? fy : 1.0 - fy);
        }
    }
    return P;
}

// lattice ids of a child's corners: child (i,j), corner (sx,sy) -> (i+sx, j+sy)
inline int child_corner_lattice(int i, int j, int c) {
    return lattice_index(i + corner_dx(c), j + corner_dy(c));
}

// 3x3 stencil of patch lattice vertex L from the patch operator, truncated
// at the patch boundary
void stencil_of(const std::array<double, 256>& A, int L, double S[3][3]) {
    int lx = L % 4, ly = L / 4;
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            int nx = lx + dx, ny = ly + dy;
            S[dy + 1][dx + 1] =
                (nx >= 0 && nx < 4 && ny >= 0 && ny < 4) ? A[L * 16 + lattice_index(nx, ny)] : 0.0;
        }
    }
}

bool solve4(double M[4][4], double rhs[4][4]) {
    // Gaussian elimination with partial pivoting; rhs holds 4 columns
    int perm[4] = {0, 1, 2, 3};
    for (int k = 0; k < 4; ++k) {
        int p = k;
        for (int r = k + 1; r < 4; ++r)
            if (std::fabs(M[perm[r]][k]) > std::fabs(M[perm[p]][k])) p = r;
        std::swap(perm[k], perm[p]);
        double piv = M[perm[k]][k];
        if (std::fabs(piv) < 1e-14) return false;
        for (int r = k + 1; r < 4; ++r) {
            double f = M[perm[r]][k] / piv;
            if (f == 0.0) continue;
            for (int c = k; c < 4; ++c) M[perm[r]][c] -= f * M[perm[k]][c];
            for (int c = 0; c < 4; ++c) rhs[perm[r]][c] -= f * rhs[perm[k]][c];
        }
    }
    for (int k = 3; k >= 0; --k) {
        for (int c = 0; c < 4; ++c) {
            double v = rhs[perm[k]][c];
            for (int j = k + 1; j < 4; ++j) v -= M[perm[k]][j] * rhs[perm[j]][c];
            rhs[perm[k]][c] = v / M[perm[k]][k];
        }
    }
    // un-permute in place
    double tmp[4][4];
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 4; ++c) tmp[k][c] = rhs[perm[k]][c];
    for (int k = 0; k < 4; ++k)
        for (int c = 0; c < 4; ++c) rhs[k][c] = tmp[k][c];
    return true;
}

}  // namespace

const TransferBlock& geometric_prolongation() {
    static const TransferBlock P = make_geometric();
    return P;
}

std::array<double, 256> assemble_patch_operator(const PatchMatrices& children) {
    std::array<double, 256> A{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const Mat4& K = children[i * 3 + j];
            int ids[4];
            for (int c = 0; c < kCorners; ++c) ids[c] = child_corner_lattice(i, j, c);
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) A[ids[a] * 16 + ids[b]] += K(a, b);
        }
    }
    return A;
}

BoxmgResult boxmg_prolongation(const PatchMatrices& children) {
    BoxmgResult out;
    TransferBlock& P = out.block;
    const TransferBlock& geo = geometric_prolongation();
    auto A = assemble_patch_operator(children);

    // coarse corners are identity rows
    static constexpr int kCornerLattice[4] = {0, 3, 12, 15};
    for (int c = 0; c < kCorners; ++c) P.at(kCornerLattice[c], c) = 1.0;

    // edge lines: two interior lattice points per edge, collapsed 1D solve
    struct Edge {
        int ids[2];      // in line order from endA to endB
        int endA, endB;  // coarse corner indices
        bool along_x;
    };
    static constexpr Edge kEdges[4] = {
        {{1, 2}, 0, 1, true},    // south
        {{13, 14}, 2, 3, true},  // north
        {{4, 8}, 0, 2, false},   // west
        {{7, 11}, 1, 3, false},  // east
    };
    for (const Edge& e : kEdges) {
        double w[2], c[2], s[2];
        bool ok = true;
        for (int k = 0; k < 2; ++k) {
            double S[3][3];
            stencil_of(A, e.ids[k], S);
            if (e.along_x) {
                w[k] = S[0][0] + S[1][0] + S[2][0];
                c[k] = S[0][1] + S[1][1] + S[2][1];
                s[k] = S[0][2] + S[1][2] + S[2][2];
            } else {
                w[k] = S[0][0] + S[0][1] + S[0][2];
                c[k] = S[1][0] + S[1][1] + S[1][2];
                s[k] = S[2][0] + S[2][1] + S[2][2];
            }
            if (!(c[k] > 0.0)) ok = false;
        }
        // 2x2 line system: c0 u0 + s0 u1 = -w0 uA ; w1 u0 + c1 u1 = -s1 uB
        double det = c[0] * c[1] - s[0] * w[1];
        if (!ok || std::fabs(det) < 1e-300) {
            for (int k = 0; k < 2; ++k) {
                for (int cc = 0; cc < 4; ++cc) P.at(e.ids[k], cc) = geo.at(e.ids[k], cc);
                ++out.fallback_rows;
            }
            continue;
        }
        // contribution of uA
        P.at(e.ids[0], e.endA) = (-w[0] * c[1]) / det;
        P.at(e.ids[1], e.endA) = (w[0] * w[1]) / det;
        // contribution of uB
        P.at(e.ids[0], e.endB) = (s[0] * s[1]) / det;
        P.at(e.ids[1], e.endB) = (-c[0] * s[1]) / det;
    }

    // interior lattice vertices solve the local homogeneous problem with the
    // already-determined boundary rows substituted
    static constexpr int kInterior[4] = {5, 6, 9, 10};
    double M[4][4], rhs[4][4] = {};
    for (int r = 0; r < 4; ++r)
        for (int cidx = 0; cidx < 4; ++cidx) M[r][cidx] = A[kInterior[r] * 16 + kInterior[cidx]];
    for (int r = 0; r < 4; ++r) {
        for (int L = 0; L < kPatchLattice; ++L) {
            bool is_interior = false;
            for (int q : kInterior) is_interior |= (q == L);
            if (is_interior) continue;
            double a = A[kInterior[r] * 16 + L];
            if (a == 0.0) continue;
            for (int cc = 0; cc < 4; ++cc) rhs[r][cc] -= a * P.at(L, cc);
        }
    }
    double Mcopy[4][4];
    for (int r = 0; r < 4; ++r)
        for (int cidx = 0; cidx < 4; ++cidx) Mcopy[r][cidx] = M[r][cidx];
    if (solve4(Mcopy, rhs)) {
        for (int r = 0; r < 4; ++r)
            for (int cc = 0; cc < 4; ++cc) P.at(kInterior[r], cc) = rhs[r][cc];
    } else {
        for (int r = 0; r < 4; ++r) {
            for (int cc = 0; cc < 4; ++cc) P.at(kInterior[r], cc) = geo.at(kInterior[r], cc);
            ++out.fallback_rows;
        }
    }
    return out;
}

Mat4 galerkin_coarse_element(const PatchMatrices& children, const TransferBlock& P) {
    auto A = assemble_patch_operator(children);
    // T = A * P (16x4), then P^T * T (4x4)
    double T[16][4] = {};
    for (int r = 0; r < 16; ++r)
        for (int k = 0; k < 16; ++k) {
            double a = A[r * 16 + k];
            if (a == 0.0) continue;
            for (int c = 0; c < 4; ++c) T[r][c] += a * P.at(k, c);
        }
    Mat4 out;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double v = 0.0;
            for (int k = 0; k < 16; ++k) v += P.at(k, r) * T[k][c];
            out(r, c) = v;
        }
    return out;
}

}  // namespace lazymg
