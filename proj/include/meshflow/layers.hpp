#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "meshflow/autodiff.hpp"

namespace meshflow {

/// Weight is in x out, bias is 1 x out.
struct LinearLayer {
  Parameter weight;
  Parameter bias;

  LinearLayer() = default;
  LinearLayer(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }
  Var forward(Tape& tape, const Var& x) {
    return pointwise_linear(x, tape.param(weight), tape.param(bias));
  }
  void zero_output();
};

struct BatchNormLayer {
  Parameter gamma;
  Parameter beta;
  BatchNormStats stats;

  BatchNormLayer() = default;
  BatchNormLayer(const std::string& name, std::size_t channels);

  Var forward(Tape& tape, const Var& x, NormMode mode) {
    return batchnorm_points(x, tape.param(gamma), tape.param(beta), stats, mode);
  }
};

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor uniform_fan_in(std::size_t fan_in, std::size_t rows, std::size_t cols,
                      std::mt19937_64& rng);

}  // namespace meshflow
