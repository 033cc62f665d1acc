#include "lazymg/problem.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace lazymg {

double epsilon_theta(double x, double y, double theta) {
    constexpr double amplitude = 0.3 / 2.0;  // 0.3/d with d = 2
    double px = std::exp(-theta * x) * std::cos(std::numbers::pi * theta * x);
    double py = std::exp(-theta * y) * std::cos(std::numbers::pi * theta * y);
    return 1.0 + amplitude * px * py;
}

double epsilon_quadrant(double x, double y, double eps_low) {
    // centre off the mesh lines: no cell face up to depth 7 hits it
    constexpr double centre = 0.5 + 1.0 / (2.0 * 2187.0);
    bool east = x >= centre;
    bool north = y >= centre;
    return east == north ? 1.0 : eps_low;
}

double MaterialField::operator()(double x, double y) const {
    switch (kind) {
        case Kind::constant: return value;
        case Kind::theta: return epsilon_theta(x, y, theta);
        case Kind::quadrant: return epsilon_quadrant(x, y, eps_low);
    }
    return value;
}

std::string MaterialField::describe() const {
    std::ostringstream s;
    switch (kind) {
        case Kind::constant: s << "constant eps=" << value; break;
        case Kind::theta: s << "theta field theta=" << theta; break;
        case Kind::quadrant: s << "quadrant eps_low=" << eps_low; break;
    }
    return s.str();
}

uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

void init_noise(Mesh& mesh, const ProblemInstance& problem) {
    for (int l = 0; l <= mesh.max_level(); ++l) {
        for (int32_t vid : mesh.level_vertices(l)) {
            Vertex& v = mesh.vertex(vid);
            if (v.kind == VertexKind::dirichlet) {
                v.u = problem.g(v.x(), v.y());
                continue;
            }
            if (v.kind != VertexKind::interior) continue;
            uint64_t k = splitmix64(problem.noise_seed ^ splitmix64(
                             (static_cast<uint64_t>(l) << 48) ^
                             (static_cast<uint64_t>(static_cast<uint32_t>(v.ix)) << 24) ^
                             static_cast<uint64_t>(static_cast<uint32_t>(v.iy))));
            v.u = (4.0 / 3.0) * static_cast<double>(k >> 11) * 0x1.0p-53;
        }
    }
    mesh.inject_solution();
    for (int l = 1; l <= mesh.max_level(); ++l) mesh.interpolate_hanging(l);
}

}  // namespace lazymg
