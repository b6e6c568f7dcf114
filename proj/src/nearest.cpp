#include "meshflow/nearest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "meshflow/error.hpp"

namespace meshflow {
namespace {

constexpr std::size_t kLeafSize = 8;

bool better(double d, std::size_t i, const KdTree::Hit& best) {
  return d < best.sq_dist || (d == best.sq_dist && i < best.index);
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
  if (points_.empty()) throw ShapeError("kd-tree over an empty point set");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  build(0, points_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end, 0, 0, -1, 0.0});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = points_[order_[i]];
    for (int k = 0; k < 3; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  int axis = 0;
  for (int k = 1; k < 3; ++k) {
    if (hi[k] - lo[k] > hi[axis] - lo[axis]) axis = k;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     const double ca = points_[a][axis];
                     const double cb = points_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  return id;
}

template <typename Visit>
void KdTree::search(std::size_t node_id, const Vec3& q, const double& bound,
                    Visit&& visit) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      visit(idx, squared_distance(q, points_[idx]));
    }
    return;
  }
  const double delta = q[node.axis] - node.split;
  const std::size_t near_child = delta < 0.0 ? node.left : node.right;
  const std::size_t far_child = delta < 0.0 ? node.right : node.left;
  search(near_child, q, bound, visit);
  // Far-side points differ from q by at least |delta| along the split axis;
  // equality is still visited so that lower-index ties are found.
  if (delta * delta <= bound) search(far_child, q, bound, visit);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  Hit best{std::numeric_limits<std::size_t>::max(),
           std::numeric_limits<double>::infinity()};
  search(0, query, best.sq_dist, [&](std::size_t i, double d) {
    if (better(d, i, best)) best = {i, d};
  });
  return best;
}

std::pair<KdTree::Hit, KdTree::Hit> KdTree::nearest_two(const Vec3& query) const {
  const double inf = std::numeric_limits<double>::infinity();
  const auto none = std::numeric_limits<std::size_t>::max();
  Hit first{none, inf};
  Hit second{none, inf};
  search(0, query, second.sq_dist, [&](std::size_t i, double d) {
    if (better(d, i, first)) {
      second = first;
      first = {i, d};
    } else if (better(d, i, second)) {
      second = {i, d};
    }
  });
  return {first, second};
}

ChamferMatch chamfer_match(std::span<const Vec3> a, std::span<const Vec3> b,
                           bool with_tie_gap) {
  if (a.empty() || b.empty()) throw ShapeError("chamfer distance of an empty cloud");
  ChamferMatch m;
  m.min_tie_gap = std::numeric_limits<double>::infinity();
  auto directed = [&](std::span<const Vec3> from, std::span<const Vec3> to,
                      std::vector<std::size_t>& nn, std::vector<double>& dist) {
    const KdTree tree(to);
    nn.resize(from.size());
    dist.resize(from.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
      KdTree::Hit hit;
      if (with_tie_gap) {
        auto [first, second] = tree.nearest_two(from[i]);
        hit = first;
        if (std::isfinite(second.sq_dist)) {
          m.min_tie_gap = std::min(
              m.min_tie_gap, std::sqrt(second.sq_dist) - std::sqrt(first.sq_dist));
        }
      } else {
        hit = tree.nearest(from[i]);
      }
      nn[i] = hit.index;
      dist[i] = hit.sq_dist;
      sum += hit.sq_dist;
    }
    return sum / static_cast<double>(from.size());
  };
  const double ab = directed(a, b, m.a_to_b, m.a_sq_dist);
  const double ba = directed(b, a, m.b_to_a, m.b_sq_dist);
  m.value = ab + ba;
  return m;
}

}  // namespace meshflow
