#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "meshflow/autodiff.hpp"

namespace meshflow {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::size_t attempts = 0;  // input draws needed to avoid a kink
};

struct GradCheckOptions {
  double step = 1e-5;
  // Inputs whose tape reports a kink closer than this are redrawn.
  double kink_margin = 1e-4;
  std::size_t max_attempts = 25;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  // Central differences on O(1) losses carry ~1e-10 of round-off, so smaller
  // gradients are effectively compared in absolute terms.
  double floor = 1e-5;
};

double relative_error(double analytic, double numeric, double floor);

/// Builds the scalar graph on a fresh tape from leaf inputs.
using GraphFn = std::function<Var(Tape&, std::span<const Var>)>;
/// Draws inputs for attempt k (k = 0, 1, ...).
using InputSampler = std::function<std::vector<Tensor>(std::size_t attempt)>;

/// Central-difference check of d(graph)/d(inputs) for every input entry.
/// Throws NumericError if every draw sits on a kink.
GradCheckResult grad_check(const GraphFn& graph, const InputSampler& sample,
                           const GradCheckOptions& options = {});
GradCheckResult grad_check(const GraphFn& graph, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

/// Same check against parameters bound with Tape::param inside `graph`.
/// `resample(k)` redraws parameter values when attempt k hits a kink.
GradCheckResult grad_check_params(const std::function<Var(Tape&)>& graph,
                                  std::span<Parameter* const> params,
                                  const std::function<void(std::size_t)>& resample,
                                  const GradCheckOptions& options = {});

}  // namespace meshflow
