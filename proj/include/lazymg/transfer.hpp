#pragma once

#include <array>

#include "lazymg/types.hpp"

namespace lazymg {

/// 9 child element matrices of a refined cell, child index lx*3+ly.
using PatchMatrices = std::array<Mat4, 9>;

/// d-linear interpolation weights of the 4x4 fine lattice (exact rationals
/// over 9, held in doubles). Rows sum to 1; the restriction is the transpose.
const TransferBlock& geometric_prolongation();

/// 16x16 patch operator assembled from the 9 child element matrices.
std::array<double, 256> assemble_patch_operator(const PatchMatrices& children);

struct BoxmgResult {
    TransferBlock block;
    int fallback_rows = 0;  // rows that fell back to geometric weights
};

/// Operator-dependent prolongation by 2D stencil collapsing: patch-corner
/// rows are identity, edge rows solve the 1D collapsed system along the
/// edge, interior rows solve the local 4x4 homogeneous problem with the
/// boundary rows substituted. Rows whose collapsed centre loses positivity
/// fall back to geometric weights.
BoxmgResult boxmg_prolongation(const PatchMatrices& children);

/// Ritz-Galerkin coarse element matrix R * A_patch * P with R = P^T.
Mat4 galerkin_coarse_element(const PatchMatrices& children, const TransferBlock& P);

}  // namespace lazymg
