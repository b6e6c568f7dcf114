#include "meshflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "meshflow/error.hpp"
#include "meshflow/optim.hpp"

namespace meshflow {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const GraphFn& graph, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return graph(tape, vars).value().item();
}

}  // namespace

GradCheckResult grad_check(const GraphFn& graph, const InputSampler& sample,
                           const GradCheckOptions& options) {
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    std::vector<Tensor> inputs = sample(attempt);
    Tape tape;
    tape.set_track_ties(true);
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t));
    Var out = graph(tape, vars);
    if (tape.kink_margin() < options.kink_margin) continue;
    tape.backward(out);

    GradCheckResult result;
    result.attempts = attempt + 1;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor analytic = vars[i].grad();
      for (std::size_t k = 0; k < inputs[i].size(); ++k) {
        const double saved = inputs[i][k];
        inputs[i][k] = saved + options.step;
        const double up = evaluate(graph, inputs);
        inputs[i][k] = saved - options.step;
        const double down = evaluate(graph, inputs);
        inputs[i][k] = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        result.max_rel_error = std::max(
            result.max_rel_error, relative_error(analytic[k], numeric, options.floor));
        ++result.entries_checked;
      }
    }
    return result;
  }
  throw NumericError("grad_check: every input draw was within the kink margin");
}

GradCheckResult grad_check(const GraphFn& graph, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  GradCheckOptions once = options;
  once.max_attempts = 1;
  once.kink_margin = 0.0;
  return grad_check(graph, [&](std::size_t) { return inputs; }, once);
}

GradCheckResult grad_check_params(const std::function<Var(Tape&)>& graph,
                                  std::span<Parameter* const> params,
                                  const std::function<void(std::size_t)>& resample,
                                  const GradCheckOptions& options) {
  auto evaluate_params = [&]() {
    Tape tape;
    return graph(tape).value().item();
  };
  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    if (attempt > 0 && resample) resample(attempt);
    zero_grads(params);
    Tape tape;
    tape.set_track_ties(true);
    Var out = graph(tape);
    if (tape.kink_margin() < options.kink_margin) continue;
    tape.backward(out);

    GradCheckResult result;
    result.attempts = attempt + 1;
    for (Parameter* p : params) {
      const Tensor analytic = p->grad;
      for (std::size_t k = 0; k < p->value.size(); ++k) {
        const double saved = p->value[k];
        p->value[k] = saved + options.step;
        const double up = evaluate_params();
        p->value[k] = saved - options.step;
        const double down = evaluate_params();
        p->value[k] = saved;
        const double numeric = (up - down) / (2.0 * options.step);
        result.max_rel_error = std::max(
            result.max_rel_error, relative_error(analytic[k], numeric, options.floor));
        ++result.entries_checked;
      }
    }
    return result;
  }
  throw NumericError("grad_check_params: every parameter draw was within the kink margin");
}

}  // namespace meshflow
