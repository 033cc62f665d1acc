#pragma once

#include <cstdint>
#include <string>

#include "lazymg/mesh.hpp"

namespace lazymg {

/// Material parameter eps(x) of -div(eps grad u) = f. Pure and deterministic;
/// safe to evaluate concurrently.
struct MaterialField {
    enum class Kind { constant, theta, quadrant };
    Kind kind = Kind::constant;
    double value = 1.0;    // constant variant
    double theta = 0.0;    // theta variant
    double eps_low = 0.1;  // quadrant variant

    double operator()(double x, double y) const;

    static MaterialField constant(double v = 1.0) { return {Kind::constant, v, 0.0, 0.0}; }
    static MaterialField theta_field(double theta) { return {Kind::theta, 1.0, theta, 0.0}; }
    static MaterialField quadrant(double eps_low) { return {Kind::quadrant, 1.0, 0.0, eps_low}; }

    std::string describe() const;
};

/// eps(x) = 1 + (0.3/d) * prod_i exp(-theta x_i) cos(pi theta x_i), d = 2.
double epsilon_theta(double x, double y, double theta);

/// Four regions about a centre offset off the mesh lines by 1/(2*3^7);
/// the diagonal pair returns 1, the off-diagonal pair eps_low. Points on a
/// dividing line go to the upper/right region (>= centre).
double epsilon_quadrant(double x, double y, double eps_low);

struct ProblemInstance {
    MaterialField material;
    double rhs_constant = 0.0;       // f; the paper's experiments use f = 0
    double boundary_value = 0.0;     // homogeneous Dirichlet by default
    uint64_t noise_seed = 0;

    double f(double, double) const { return rhs_constant; }
    double g(double, double) const { return boundary_value; }
};

/// Deterministic counter-based noise in [0, 4/3] (splitmix64 keyed by seed
/// and vertex (level, ix, iy)). Interior vertices get noise on every level,
/// boundary vertices the Dirichlet value; a final injection + hanging
/// interpolation makes the generating system consistent.
void init_noise(Mesh& mesh, const ProblemInstance& problem);

uint64_t splitmix64(uint64_t z);

}  // namespace lazymg
