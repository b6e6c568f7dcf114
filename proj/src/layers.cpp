#include "meshflow/layers.hpp"

#include <cmath>

namespace meshflow {

Tensor uniform_fan_in(std::size_t fan_in, std::size_t rows, std::size_t cols,
                      std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

LinearLayer::LinearLayer(const std::string& name, std::size_t in, std::size_t out,
                         std::mt19937_64& rng)
    : weight(name + ".weight", uniform_fan_in(in, in, out, rng)),
      bias(name + ".bias", uniform_fan_in(in, 1, out, rng)) {}

void LinearLayer::zero_output() {
  weight.value.fill(0.0);
  bias.value.fill(0.0);
}

BatchNormLayer::BatchNormLayer(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", Tensor(1, channels, 1.0)),
      beta(name + ".beta", Tensor(1, channels, 0.0)),
      stats{Tensor(1, channels, 0.0), Tensor(1, channels, 1.0)} {}

}  // namespace meshflow
