#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "meshflow/autodiff.hpp"
#include "meshflow/flow.hpp"
#include "meshflow/geometry.hpp"
#include "meshflow/model.hpp"

namespace testing {

using namespace meshflow;

inline Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline PointCloud random_cloud(std::size_t n, std::mt19937_64& rng, double half = 0.5) {
  std::uniform_real_distribution<double> u(-half, half);
  PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({u(rng), u(rng), u(rng)});
  return c;
}

inline Encoding random_encoding(std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Encoding e(d);
  for (auto& v : e) v = u(rng);
  return e;
}

/// Gives every conditioner output layer random weights so the flow is not the
/// identity.
inline void randomize_flow_outputs(FlowModel& flow, std::mt19937_64& rng, double scale = 0.5) {
  for (auto& b : flow.blocks()) {
    for (ConditionerMap* m : {&b.map_s, &b.map_t}) {
      m->out.weight.value = random_tensor(m->out.weight.value.rows(), 1, rng, -scale, scale);
      m->out.bias.value = random_tensor(1, 1, rng, -scale, scale);
    }
  }
}

/// Small model used across suites.
inline ModelConfig toy_model_config(std::size_t points = 32) {
  ModelConfig c;
  c.encoder = {{8, 16}, 16};
  c.decoder = {{32}, points};
  c.flow.blocks = 3;
  c.flow.proj_dim = 8;
  c.flow.hidden = 12;
  return c;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("meshflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Chamfer by definition: mean squared nearest distance in both directions,
/// written independently of the library.
inline double chamfer_oracle(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  auto directed = [](const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
    double total = 0.0;
    for (const auto& x : p) {
      double best = INFINITY;
      for (const auto& y : q) {
        const double d = (x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]) +
                         (x[2] - y[2]) * (x[2] - y[2]);
        best = std::min(best, d);
      }
      total += best;
    }
    return total / static_cast<double>(p.size());
  };
  return directed(a, b) + directed(b, a);
}

}  // namespace testing
