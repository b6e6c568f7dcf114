#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "meshflow/autodiff.hpp"

namespace meshflow {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Tensor first;
  Tensor second;
};

/// Moments are keyed by parameter name so the state survives checkpointing.
struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

/// One bias-corrected Adam update over the trainable parameters, using each
/// parameter's `grad`. Frozen parameters and their moments are left alone.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamHyper& hyper);

void zero_grads(std::span<Parameter* const> params);

}  // namespace meshflow
