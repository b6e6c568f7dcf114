#include "meshflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>

#include "meshflow/error.hpp"

namespace meshflow {

Vec3 AffineTransform::apply(const Vec3& p) const {
  return {(p[0] - center[0]) * scale, (p[1] - center[1]) * scale,
          (p[2] - center[2]) * scale};
}

Vec3 AffineTransform::invert(const Vec3& p) const {
  return {p[0] / scale + center[0], p[1] / scale + center[1],
          p[2] / scale + center[2]};
}

bool AffineTransform::is_identity() const {
  return scale == 1.0 && center[0] == 0.0 && center[1] == 0.0 &&
         center[2] == 0.0;
}

void validate_mesh(const Mesh& mesh) {
  for (const auto& v : mesh.vertices) {
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      throw NumericError("mesh has a non-finite vertex coordinate");
    }
  }
  const auto n = mesh.vertices.size();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    for (auto idx : face) {
      if (idx >= n) {
        throw UnsupportedTopologyError("face " + std::to_string(f) +
                                       " references vertex " +
                                       std::to_string(idx) + " of " +
                                       std::to_string(n));
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw UnsupportedTopologyError("face " + std::to_string(f) +
                                     " is degenerate (repeated index)");
    }
  }
}

void validate_cloud(const PointCloud& cloud) {
  if (cloud.points.empty()) throw ShapeError("point cloud is empty");
  for (const auto& p : cloud.points) {
    if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
      throw NumericError("point cloud has a non-finite coordinate");
    }
  }
}

NormalizedMesh normalize_unit_cube(const Mesh& mesh) {
  if (mesh.vertices.empty()) {
    throw DegenerateGeometryError("cannot normalize an empty mesh");
  }
  Vec3 lo = mesh.vertices.front();
  Vec3 hi = lo;
  for (const auto& v : mesh.vertices) {
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], v[k]);
      hi[k] = std::max(hi[k], v[k]);
    }
  }
  const double extent =
      std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  if (!(extent > 0.0)) {
    throw DegenerateGeometryError("mesh has zero extent");
  }
  AffineTransform t;
  for (int k = 0; k < 3; ++k) t.center[k] = 0.5 * (lo[k] + hi[k]);
  t.scale = 1.0 / extent;
  return {apply_transform(mesh, t), t};
}

Mesh apply_transform(const Mesh& mesh, const AffineTransform& transform) {
  Mesh out{{}, mesh.faces};
  out.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) out.vertices.push_back(transform.apply(v));
  return out;
}

PointCloud apply_transform(const PointCloud& cloud,
                           const AffineTransform& transform) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(transform.apply(p));
  return out;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const Vec3 v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const Vec3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
               u[0] * v[1] - u[1] * v[0]};
  return 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
}

PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed,
                          std::vector<std::size_t>* face_of_point) {
  if (n == 0) throw ConfigError("sample_surface needs n >= 1");
  if (mesh.faces.empty()) {
    throw DegenerateGeometryError("cannot sample a mesh without faces");
  }
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    total += triangle_area(mesh.vertices[face[0]], mesh.vertices[face[1]],
                           mesh.vertices[face[2]]);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) {
    throw DegenerateGeometryError("mesh has zero surface area");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  cloud.points.reserve(n);
  if (face_of_point) {
    face_of_point->clear();
    face_of_point->reserve(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto f = static_cast<std::size_t>(it - cumulative.begin());
    const auto& face = mesh.faces[f];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const double wa = 1.0 - r1;
    const double wb = r1 * (1.0 - r2);
    const double wc = r1 * r2;
    const auto& a = mesh.vertices[face[0]];
    const auto& b = mesh.vertices[face[1]];
    const auto& c = mesh.vertices[face[2]];
    cloud.points.push_back({wa * a[0] + wb * b[0] + wc * c[0],
                            wa * a[1] + wb * b[1] + wc * c[1],
                            wa * a[2] + wb * b[2] + wc * c[2]});
    if (face_of_point) face_of_point->push_back(f);
  }
  return cloud;
}

namespace {

// Mean over `from` of the squared distance to the nearest point of `to`,
// accumulated in index order.
double directed_bruteforce(const std::vector<Vec3>& from,
                           const std::vector<Vec3>& to) {
  double sum = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) best = std::min(best, squared_distance(p, q));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer_bruteforce(const PointCloud& a, const PointCloud& b) {
  if (a.points.empty() || b.points.empty()) {
    throw ShapeError("chamfer distance of an empty cloud");
  }
  return directed_bruteforce(a.points, b.points) +
         directed_bruteforce(b.points, a.points);
}

TopologySummary topology_summary(const Mesh& mesh) {
  std::unordered_map<std::uint64_t, std::uint32_t> edge_use;
  edge_use.reserve(mesh.faces.size() * 3);
  for (const auto& face : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      std::uint64_t a = face[k];
      std::uint64_t b = face[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edge_use[(a << 32) | b];
    }
  }
  TopologySummary s;
  s.vertex_count = mesh.vertices.size();
  s.edge_count = edge_use.size();
  s.face_count = mesh.faces.size();
  s.euler_characteristic = static_cast<std::int64_t>(s.vertex_count) -
                           static_cast<std::int64_t>(s.edge_count) +
                           static_cast<std::int64_t>(s.face_count);
  s.watertight = !edge_use.empty() &&
                 std::all_of(edge_use.begin(), edge_use.end(),
                             [](const auto& kv) { return kv.second == 2; });
  return s;
}

PointCloud vertices_as_cloud(const Mesh& mesh) { return {mesh.vertices}; }

}  // namespace meshflow
