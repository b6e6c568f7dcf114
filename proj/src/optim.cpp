#include "meshflow/optim.hpp"

#include <cmath>

#include "meshflow/error.hpp"

namespace meshflow {

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamHyper& hyper) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(hyper.beta1, t);
  const double correct2 = 1.0 - std::pow(hyper.beta2, t);
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.shape() != p->value.shape()) {
      // Parameter never reached by backward: its gradient is zero.
      p->zero_grad();
    }
    auto [it, inserted] = state.moments.try_emplace(p->name);
    auto& mom = it->second;
    if (inserted || mom.first.shape() != p->value.shape()) {
      mom.first = Tensor(p->value.rows(), p->value.cols());
      mom.second = Tensor(p->value.rows(), p->value.cols());
    }
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double g = p->grad[k];
      mom.first[k] = hyper.beta1 * mom.first[k] + (1.0 - hyper.beta1) * g;
      mom.second[k] = hyper.beta2 * mom.second[k] + (1.0 - hyper.beta2) * g * g;
      const double mhat = mom.first[k] / correct1;
      const double vhat = mom.second[k] / correct2;
      p->value[k] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
    }
    p->value.check_finite("adam_step(" + p->name + ")");
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace meshflow
