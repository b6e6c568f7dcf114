#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "meshflow/geometry.hpp"

namespace meshflow {

/// Static kd-tree over a point set. Queries return the true nearest neighbour
/// with ties broken towards the lowest point index, matching a linear scan.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  struct Hit {
    std::size_t index = 0;
    double sq_dist = 0.0;
  };

  Hit nearest(const Vec3& query) const;

  /// Nearest and runner-up (by squared distance, ties by index). The runner-up
  /// distance is +inf for single-point trees.
  std::pair<Hit, Hit> nearest_two(const Vec3& query) const;

  std::size_t size() const noexcept { return points_.size(); }

 private:
  struct Node {
    // Leaves cover order_[begin, end). Inner nodes split on `axis` at `split`:
    // the left child holds coordinates <= split, the right child >= split.
    std::size_t begin = 0, end = 0;
    std::size_t left = 0, right = 0;
    int axis = -1;
    double split = 0.0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  template <typename Visit>
  void search(std::size_t node, const Vec3& q, const double& bound, Visit&& visit) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Nearest-neighbour correspondences in both directions plus the chamfer value
/// (same convention and accumulation order as chamfer_bruteforce).
struct ChamferMatch {
  double value = 0.0;
  std::vector<std::size_t> a_to_b;  // for each point of a, its neighbour in b
  std::vector<std::size_t> b_to_a;
  std::vector<double> a_sq_dist;
  std::vector<double> b_sq_dist;
  // Smallest gap between nearest and runner-up distance over all queries;
  // only filled when requested.
  double min_tie_gap = 0.0;
};

ChamferMatch chamfer_match(std::span<const Vec3> a, std::span<const Vec3> b,
                           bool with_tie_gap = false);

}  // namespace meshflow
