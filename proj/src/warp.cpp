#include "meshflow/warp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "meshflow/error.hpp"

namespace meshflow {

double thin_plate_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

std::array<Vec3, WarpField::kNodes> warp_lattice() {
  std::array<Vec3, WarpField::kNodes> nodes{};
  const double ticks[3] = {-0.5, 0.0, 0.5};
  std::size_t n = 0;
  for (double x : ticks) {
    for (double y : ticks) {
      for (double z : ticks) nodes[n++] = {x, y, z};
    }
  }
  return nodes;
}

void WarpField::fit() {
  constexpr int n = static_cast<int>(kNodes);
  constexpr int dim = n + 4;
  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dim, 3);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      system(i, j) = thin_plate_kernel(std::sqrt(squared_distance(nodes[i], nodes[j])));
    }
    system(i, n) = 1.0;
    system(n, i) = 1.0;
    for (int k = 0; k < 3; ++k) {
      system(i, n + 1 + k) = nodes[i][k];
      system(n + 1 + k, i) = nodes[i][k];
      rhs(i, k) = node_displacements[i][k];
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) throw NumericError("singular thin-plate spline system");
  const Eigen::MatrixXd solution = lu.solve(rhs);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) rbf_weights[i][k] = solution(i, k);
  }
  for (int a = 0; a < 4; ++a) {
    for (int k = 0; k < 3; ++k) affine[a][k] = solution(n + a, k);
  }
}

Vec3 WarpField::displacement(const Vec3& p) const {
  Vec3 out{};
  for (int k = 0; k < 3; ++k) {
    out[k] = affine[0][k] + affine[1][k] * p[0] + affine[2][k] * p[1] + affine[3][k] * p[2];
  }
  for (std::size_t i = 0; i < kNodes; ++i) {
    const double phi = thin_plate_kernel(std::sqrt(squared_distance(p, nodes[i])));
    for (int k = 0; k < 3; ++k) out[k] += rbf_weights[i][k] * phi;
  }
  return out;
}

double WarpField::max_node_residual() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < kNodes; ++i) {
    const Vec3 d = displacement(nodes[i]);
    for (int k = 0; k < 3; ++k) {
      worst = std::max(worst, std::abs(d[k] - node_displacements[i][k]));
    }
  }
  return worst;
}

WarpField warp_field_from_displacements(const std::array<Vec3, WarpField::kNodes>& d) {
  WarpField field;
  field.nodes = warp_lattice();
  field.node_displacements = d;
  field.fit();
  return field;
}

WarpField sample_warp_field(std::uint64_t seed, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("warp sigma must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  std::array<Vec3, WarpField::kNodes> d{};
  for (auto& v : d) {
    for (auto& c : v) c = gauss(rng);
  }
  WarpField field = warp_field_from_displacements(d);
  field.seed = seed;
  field.sigma = sigma;
  return field;
}

std::vector<Vec3> warp_displacement(const WarpField& field, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(field.displacement(p));
  return out;
}

Mesh apply_warp(const Mesh& mesh, const WarpField& field) {
  Mesh out{mesh.vertices, mesh.faces};
  for (auto& v : out.vertices) {
    const Vec3 d = field.displacement(v);
    for (int k = 0; k < 3; ++k) v[k] += d[k];
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      throw NumericError("warp produced a non-finite vertex");
    }
  }
  return out;
}

Trajectory generate_trajectory(const Mesh& templ, const WarpField& field,
                               std::size_t n_steps, std::string template_id) {
  if (n_steps < 1) throw ConfigError("trajectory needs n_steps >= 1");
  Trajectory traj{std::move(template_id), field, {}};
  traj.steps.reserve(n_steps + 1);
  traj.steps.push_back(templ);
  for (std::size_t k = 1; k <= n_steps; ++k) {
    traj.steps.push_back(apply_warp(traj.steps.back(), field));
  }
  return traj;
}

}  // namespace meshflow
