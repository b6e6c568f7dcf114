#include "meshflow/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "meshflow/error.hpp"

namespace meshflow::fixtures {
namespace {

double smoothstep(double lo, double hi, double x) {
  const double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct Shape {
  Vec3 radii;
  double exponent;
  // Cross-section scale as a function of the unit long-axis coordinate.
  double (*profile)(double);
};

double flat(double) { return 1.0; }
double bottle_neck(double u) { return 1.0 - 0.45 * smoothstep(0.55, 0.8, u); }
double hammer_head(double u) { return 1.0 + 3.0 * smoothstep(0.72, 0.82, u); }
double blade_taper(double u) { return 1.0 - 0.7 * smoothstep(-0.2, 1.0, u); }

Shape shape_for(std::string_view name) {
  if (name == "scissors") return {{0.5, 0.16, 0.025}, 3.0, blade_taper};
  if (name == "hammer") return {{0.5, 0.07, 0.05}, 4.0, hammer_head};
  if (name == "orange") return {{0.5, 0.48, 0.48}, 2.0, flat};
  if (name == "dice") return {{0.5, 0.5, 0.5}, 8.0, flat};
  if (name == "brick") return {{0.5, 0.33, 0.25}, 8.0, flat};
  if (name == "cleanser") return {{0.5, 0.2, 0.13}, 4.0, bottle_neck};
  throw ConfigError("unknown desk object '" + std::string(name) + "'");
}

}  // namespace

Mesh tetrahedron() {
  return Mesh{{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}},
              {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}}};
}

Mesh torus(std::size_t major_segments, std::size_t minor_segments,
           double major_radius, double minor_radius) {
  if (major_segments < 3 || minor_segments < 3) {
    throw ConfigError("torus needs at least 3 segments in each direction");
  }
  Mesh mesh;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < major_segments; ++i) {
    const double u = two_pi * static_cast<double>(i) / static_cast<double>(major_segments);
    for (std::size_t j = 0; j < minor_segments; ++j) {
      const double v = two_pi * static_cast<double>(j) / static_cast<double>(minor_segments);
      const double ring = major_radius + minor_radius * std::cos(v);
      mesh.vertices.push_back(
          {ring * std::cos(u), ring * std::sin(u), minor_radius * std::sin(v)});
    }
  }
  auto id = [&](std::size_t i, std::size_t j) {
    return static_cast<std::uint32_t>((i % major_segments) * minor_segments +
                                      (j % minor_segments));
  };
  for (std::size_t i = 0; i < major_segments; ++i) {
    for (std::size_t j = 0; j < minor_segments; ++j) {
      mesh.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      mesh.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return mesh;
}

const std::vector<std::string>& desk_object_names() {
  static const std::vector<std::string> names{"scissors", "hammer", "orange",
                                              "dice",     "brick",  "cleanser"};
  return names;
}

Mesh desk_object(std::string_view name, std::size_t subdivisions) {
  if (subdivisions < 1) throw ConfigError("desk_object needs subdivisions >= 1");
  const Shape shape = shape_for(name);
  const std::size_t n = subdivisions;
  const std::size_t side = n + 1;
  std::vector<std::uint32_t> ids(side * side * side, UINT32_MAX);
  Mesh mesh;

  auto lattice = [&](std::size_t i) {
    // (2i)/n is correctly rounded, so lattice coordinates of an s-mesh and
    // a 2s-mesh coincide exactly.
    return static_cast<double>(2 * i) / static_cast<double>(n) - 1.0;
  };
  auto vertex = [&](std::size_t i, std::size_t j, std::size_t k) {
    auto& slot = ids[(i * side + j) * side + k];
    if (slot != UINT32_MAX) return slot;
    const Vec3 c{lattice(i), lattice(j), lattice(k)};
    const double e = shape.exponent;
    const double norm = std::pow(std::pow(std::abs(c[0]), e) + std::pow(std::abs(c[1]), e) +
                                     std::pow(std::abs(c[2]), e),
                                 1.0 / e);
    const Vec3 u{c[0] / norm, c[1] / norm, c[2] / norm};
    const double g = shape.profile(u[0]);
    slot = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(
        {shape.radii[0] * u[0], shape.radii[1] * u[1] * g, shape.radii[2] * u[2] * g});
    return slot;
  };

  for (int axis = 0; axis < 3; ++axis) {
    for (int high = 0; high < 2; ++high) {
      // (a1, a2) spans the face so that a1 x a2 points outward.
      int a1 = (axis + 1) % 3;
      int a2 = (axis + 2) % 3;
      if (!high) std::swap(a1, a2);
      for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
          auto at = [&](std::size_t dp, std::size_t dq) {
            std::array<std::size_t, 3> idx{};
            idx[axis] = high ? n : 0;
            idx[a1] = p + dp;
            idx[a2] = q + dq;
            return vertex(idx[0], idx[1], idx[2]);
          };
          const auto v00 = at(0, 0), v10 = at(1, 0), v11 = at(1, 1), v01 = at(0, 1);
          mesh.faces.push_back({v00, v10, v11});
          mesh.faces.push_back({v00, v11, v01});
        }
      }
    }
  }
  return mesh;
}

std::size_t subdivisions_for_vertex_count(std::size_t target) {
  std::size_t best = 1;
  auto count = [](std::size_t s) { return 6 * s * s + 2; };
  auto dist = [&](std::size_t s) {
    const auto c = count(s);
    return c > target ? c - target : target - c;
  };
  for (std::size_t s = 1; count(s) <= 4 * target + 8; ++s) {
    if (dist(s) < dist(best)) best = s;
  }
  return best;
}

}  // namespace meshflow::fixtures
