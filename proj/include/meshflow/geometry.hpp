#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace meshflow {

using Vec3 = std::array<double, 3>;
using Face = std::array<std::uint32_t, 3>;

/// Triangle mesh. Deformations only ever touch `vertices`; the face list of a
/// template is shared verbatim by every mesh derived from it.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  friend bool operator==(const Mesh&, const Mesh&) = default;
};

/// Unordered set of surface samples. Every consumer must be invariant to
/// point order.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const noexcept { return points.size(); }
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct TopologySummary {
  std::size_t vertex_count = 0;
  std::size_t edge_count = 0;
  std::size_t face_count = 0;
  std::int64_t euler_characteristic = 0;
  bool watertight = false;

  friend bool operator==(const TopologySummary&, const TopologySummary&) = default;
};

/// Maps original coordinates to the normalized frame: `(p - center) * scale`.
struct AffineTransform {
  Vec3 center{0.0, 0.0, 0.0};
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const;
  Vec3 invert(const Vec3& p) const;
  bool is_identity() const;
};

/// Squared Euclidean distance, summed x then y then z. Every nearest-neighbour
/// search in the library goes through this so that results agree bit for bit.
inline double squared_distance(const Vec3& a, const Vec3& b) noexcept {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Throws UnsupportedTopologyError on out-of-range or repeated face indices and
/// NumericError on non-finite coordinates.
void validate_mesh(const Mesh& mesh);
void validate_cloud(const PointCloud& cloud);

/// Centers the bounding box at the origin and scales the longest axis to
/// [-0.5, 0.5].
struct NormalizedMesh {
  Mesh mesh;
  AffineTransform transform;
};
NormalizedMesh normalize_unit_cube(const Mesh& mesh);
Mesh apply_transform(const Mesh& mesh, const AffineTransform& transform);
PointCloud apply_transform(const PointCloud& cloud, const AffineTransform& transform);

/// Area-weighted triangle choice followed by uniform barycentric sampling.
/// Deterministic for a given seed. When `face_of_point` is non-null it receives
/// the index of the triangle each sample was drawn from.
PointCloud sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed,
                          std::vector<std::size_t>* face_of_point = nullptr);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// O(N*M) reference chamfer distance: mean squared nearest distance from `a`
/// to `b` plus the same from `b` to `a`.
double chamfer_bruteforce(const PointCloud& a, const PointCloud& b);

TopologySummary topology_summary(const Mesh& mesh);

PointCloud vertices_as_cloud(const Mesh& mesh);

}  // namespace meshflow
