#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "meshflow/geometry.hpp"

namespace meshflow {

/// Continuous displacement field: Gaussian displacements on a 3x3x3 lattice
/// spanning [-0.5, 0.5]^3, interpolated per component by a thin-plate spline
/// (kernel r^2 log r) with a linear polynomial term.
struct WarpField {
  static constexpr std::size_t kNodes = 27;

  std::array<Vec3, kNodes> nodes{};
  std::array<Vec3, kNodes> node_displacements{};
  // Kernel weights per node and the affine part [c, ax, ay, az] per output
  // component.
  std::array<Vec3, kNodes> rbf_weights{};
  std::array<Vec3, 4> affine{};
  std::uint64_t seed = 0;
  double sigma = 0.0;

  /// Solves the interpolation system for the current node displacements.
  void fit();
  Vec3 displacement(const Vec3& p) const;
  /// Largest |field(node) - node_displacement| over the lattice.
  double max_node_residual() const;
};

double thin_plate_kernel(double r);

/// Lattice nodes of the warp grid in x-major order.
std::array<Vec3, WarpField::kNodes> warp_lattice();

/// Each node displacement component is drawn i.i.d. from N(0, sigma^2) with a
/// generator seeded by `seed`.
WarpField sample_warp_field(std::uint64_t seed, double sigma);

/// Field with the given node displacements (used for hand-built fields).
WarpField warp_field_from_displacements(const std::array<Vec3, WarpField::kNodes>& d);

std::vector<Vec3> warp_displacement(const WarpField& field, std::span<const Vec3> points);

/// Moves every vertex by the field; faces are untouched.
Mesh apply_warp(const Mesh& mesh, const WarpField& field);

struct Trajectory {
  std::string template_id;
  WarpField warp;
  // steps[0] is the template; steps[k] is the warp applied k times.
  std::vector<Mesh> steps;
};

Trajectory generate_trajectory(const Mesh& templ, const WarpField& field,
                               std::size_t n_steps, std::string template_id = {});

}  // namespace meshflow
