#include "meshflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "meshflow/error.hpp"
#include "meshflow/nearest.hpp"

namespace meshflow {

const Tensor& Var::value() const {
  if (!tape_) throw ShapeError("use of an unbound Var");
  return tape_->value(id_);
}

Tensor Var::grad() const {
  if (!tape_) throw ShapeError("use of an unbound Var");
  if (tape_->has_grad(id_)) return tape_->grad(id_);
  const auto& v = tape_->value(id_);
  return Tensor(v.rows(), v.cols());
}

Var Tape::constant(Tensor value) {
  nodes_.push_back({std::move(value), {}, false, {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  nodes_.push_back({std::move(value), {}, true, {}, nullptr});
  return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return {this, it->second};
  nodes_.push_back({p.value, {}, true, {}, &p});
  bound_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_.at(id).requires_grad;
  nodes_.push_back(
      {std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}, nullptr});
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) {
    node.grad = Tensor(node.value.rows(), node.value.cols());
  }
  return node.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw ShapeError("backward on a Var from another tape");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward needs a 1x1 loss, got " + std::to_string(lv.rows()) +
                     "x" + std::to_string(lv.cols()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (nodes_[i].backward && !nodes_[i].grad.empty()) nodes_[i].backward(*this, i);
  }
  for (auto& node : nodes_) {
    if (!node.param || node.grad.empty()) continue;
    auto& acc = node.param->grad;
    if (acc.shape() != node.grad.shape()) acc = Tensor(node.grad.rows(), node.grad.cols());
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += node.grad[k];
  }
}

namespace {

Tape& same_tape(std::initializer_list<const Var*> vars) {
  Tape* tape = (*vars.begin())->tape();
  for (const Var* v : vars) {
    if (!v->tape() || v->tape() != tape) throw ShapeError("operands live on different tapes");
  }
  return *tape;
}

Var finish(Tape& tape, Tensor out, std::vector<std::size_t> inputs,
           Tape::BackwardFn fn, std::string_view op) {
  out.check_finite(op);
  return tape.record(std::move(out), std::move(inputs), std::move(fn));
}

std::string dims(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

Var pointwise_linear(const Var& x, const Var& w, const Var& b) {
  Tape& tape = same_tape({&x, &w, &b});
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ShapeError("pointwise_linear: x " + dims(xv) + ", w " + dims(wv) + ", b " +
                     dims(bv));
  }
  const std::size_t n = xv.rows(), cin = wv.rows(), cout = wv.cols();
  Tensor out(n, cout);
  kernels::linear_rows(xv.data(), wv.data(), bv.data(), out.data(), n, cin, cout);
  const auto xi = x.id(), wi = w.id(), bi = b.id();
  return finish(
      tape, std::move(out), {xi, wi, bi},
      [xi, wi, bi, n, cin, cout](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(xi)) {
          const Tensor wt = t.value(wi).transposed();
          Tensor dx(n, cin);
          kernels::linear_rows(g.data(), wt.data(), static_cast<const double*>(nullptr),
                               dx.data(), n, cout, cin);
          Tensor& acc = t.grad(xi);
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += dx[k];
        }
        if (t.requires_grad(wi)) {
          const Tensor xt = t.value(xi).transposed();
          Tensor dw(cin, cout);
          kernels::linear_rows(xt.data(), g.data(), static_cast<const double*>(nullptr),
                               dw.data(), cin, n, cout);
          Tensor& acc = t.grad(wi);
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += dw[k];
        }
        if (t.requires_grad(bi)) {
          Tensor& acc = t.grad(bi);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < cout; ++c) acc[c] += g(r, c);
          }
        }
      },
      "pointwise_linear");
}

Var pointwise_linear(const Var& x, const Var& w) {
  Tape& tape = same_tape({&x, &w});
  return pointwise_linear(x, w, tape.constant(Tensor(1, w.cols())));
}

Var relu(const Var& x) {
  Tape& tape = *x.tape();
  Tensor out = x.value();
  double margin = std::numeric_limits<double>::infinity();
  for (auto& v : out.values()) {
    margin = std::min(margin, std::abs(v));
    v = v > 0.0 ? v : 0.0;
  }
  tape.note_kink(margin);
  const auto xi = x.id();
  return finish(
      tape, std::move(out), {xi},
      [xi](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(xi);
        Tensor& acc = t.grad(xi);
        for (std::size_t k = 0; k < acc.size(); ++k) {
          if (xv[k] > 0.0) acc[k] += g[k];
        }
      },
      "relu");
}

Var tanh(const Var& x) {
  Tape& tape = *x.tape();
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  const auto xi = x.id();
  return finish(
      tape, std::move(out), {xi},
      [xi](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& y = t.value(self);
        Tensor& acc = t.grad(xi);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k] * (1.0 - y[k] * y[k]);
      },
      "tanh");
}

Var scale(const Var& x, double factor) {
  Tape& tape = *x.tape();
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  const auto xi = x.id();
  return finish(
      tape, std::move(out), {xi},
      [xi, factor](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& acc = t.grad(xi);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k] * factor;
      },
      "scale");
}

Var add(const Var& a, const Var& b) {
  Tape& tape = same_tape({&a, &b});
  if (a.value().shape() != b.value().shape()) {
    throw ShapeError("add: " + dims(a.value()) + " vs " + dims(b.value()));
  }
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  const auto ai = a.id(), bi = b.id();
  return finish(
      tape, std::move(out), {ai, bi},
      [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        for (auto id : {ai, bi}) {
          if (!t.requires_grad(id)) continue;
          Tensor& acc = t.grad(id);
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
      },
      "add");
}

Var sum(const Var& x) {
  Tape& tape = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const auto xi = x.id();
  return finish(
      tape, Tensor::scalar(s), {xi},
      [xi](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (auto& v : t.grad(xi).values()) v += g;
      },
      "sum");
}

Var weighted_sum(const Var& x, const Tensor& weights) {
  Tape& tape = *x.tape();
  if (weights.shape() != x.value().shape()) {
    throw ShapeError("weighted_sum: weights " + dims(weights) + " vs x " + dims(x.value()));
  }
  double s = 0.0;
  const auto& xv = x.value();
  for (std::size_t k = 0; k < xv.size(); ++k) s += weights[k] * xv[k];
  const auto xi = x.id();
  return finish(
      tape, Tensor::scalar(s), {xi},
      [xi, weights](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        Tensor& acc = t.grad(xi);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g * weights[k];
      },
      "weighted_sum");
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  Tape& tape = *x.tape();
  Tensor out = x.value().reshaped(rows, cols);
  const auto xi = x.id();
  return finish(
      tape, std::move(out), {xi},
      [xi](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& acc = t.grad(xi);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
      },
      "reshape");
}

Var batchnorm_points(const Var& x, const Var& gamma, const Var& beta,
                     BatchNormStats& stats, NormMode mode,
                     const BatchNormOptions& options) {
  Tape& tape = same_tape({&x, &gamma, &beta});
  const auto& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  require_shape(gamma.value(), 1, c, "batchnorm gamma");
  require_shape(beta.value(), 1, c, "batchnorm beta");
  require_shape(stats.running_mean, 1, c, "batchnorm running_mean");
  require_shape(stats.running_var, 1, c, "batchnorm running_var");
  if (mode == NormMode::train && n < 2) {
    throw ConfigError("batchnorm in train mode needs at least 2 points, got " +
                      std::to_string(n));
  }

  Tensor mean(1, c), inv_std(1, c);
  if (mode == NormMode::train) {
    for (std::size_t j = 0; j < c; ++j) {
      // Shifted by the first row so that a constant channel has mean equal
      // to its value exactly.
      const double shift = xv(0, j);
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += xv(r, j) - shift;
      const double m = shift + s / static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double d = xv(r, j) - m;
        ss += d * d;
      }
      const double var = ss / static_cast<double>(n);
      mean[j] = m;
      inv_std[j] = 1.0 / std::sqrt(var + options.eps);
      stats.running_mean[j] =
          options.momentum * stats.running_mean[j] + (1.0 - options.momentum) * m;
      stats.running_var[j] =
          options.momentum * stats.running_var[j] + (1.0 - options.momentum) * var;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = stats.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + options.eps);
    }
  }

  Tensor xhat(n, c), out(n, c);
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xv(r, j) - mean[j]) * inv_std[j];
      xhat(r, j) = h;
      out(r, j) = h * gv[j] + bv[j];
    }
  }
  const auto xi = x.id(), gi = gamma.id(), bi = beta.id();
  const bool train = mode == NormMode::train;
  return finish(
      tape, std::move(out), {xi, gi, bi},
      [xi, gi, bi, n, c, train, xhat = std::move(xhat), inv_std](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        const Tensor& gv = t.value(gi);
        if (t.requires_grad(gi) || t.requires_grad(bi)) {
          Tensor dgamma(1, c), dbeta(1, c);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              dgamma[j] += g(r, j) * xhat(r, j);
              dbeta[j] += g(r, j);
            }
          }
          if (t.requires_grad(gi)) {
            Tensor& acc = t.grad(gi);
            for (std::size_t j = 0; j < c; ++j) acc[j] += dgamma[j];
          }
          if (t.requires_grad(bi)) {
            Tensor& acc = t.grad(bi);
            for (std::size_t j = 0; j < c; ++j) acc[j] += dbeta[j];
          }
        }
        if (!t.requires_grad(xi)) return;
        Tensor& acc = t.grad(xi);
        if (!train) {
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c; ++j) acc(r, j) += g(r, j) * gv[j] * inv_std[j];
          }
          return;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < c; ++j) {
          double sum_d = 0.0, sum_dh = 0.0;
          for (std::size_t r = 0; r < n; ++r) {
            const double d = g(r, j) * gv[j];
            sum_d += d;
            sum_dh += d * xhat(r, j);
          }
          for (std::size_t r = 0; r < n; ++r) {
            const double d = g(r, j) * gv[j];
            acc(r, j) += inv_std[j] * (d - inv_n * sum_d - xhat(r, j) * inv_n * sum_dh);
          }
        }
      },
      "batchnorm_points");
}

Var maxpool_points(const Var& x) {
  Tape& tape = *x.tape();
  const auto& xv = x.value();
  const std::size_t n = xv.rows(), c = xv.cols();
  if (n == 0) throw ShapeError("maxpool over zero points");
  Tensor out(1, c);
  std::vector<std::size_t> arg(c, 0);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < c; ++j) {
    double best = xv(0, j);
    double second = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 1; r < n; ++r) {
      const double v = xv(r, j);
      if (v > best) {
        second = best;
        best = v;
        arg[j] = r;
      } else if (v > second) {
        second = v;
      }
    }
    out[j] = best;
    if (n > 1) margin = std::min(margin, best - second);
  }
  tape.note_kink(margin);
  const auto xi = x.id();
  return finish(
      tape, std::move(out), {xi},
      [xi, c, arg = std::move(arg)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& acc = t.grad(xi);
        for (std::size_t j = 0; j < c; ++j) acc(arg[j], j) += g[j];
      },
      "maxpool_points");
}

Var concat_broadcast(const Var& per_point, const Var& global) {
  Tape& tape = same_tape({&per_point, &global});
  const auto& pv = per_point.value();
  const auto& gv = global.value();
  if (gv.rows() != 1) throw ShapeError("concat_broadcast: global must be 1xC, got " + dims(gv));
  const std::size_t n = pv.rows(), c1 = pv.cols(), c2 = gv.cols();
  Tensor out(n, c1 + c2);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.row(r);
    std::copy_n(pv.row(r).begin(), c1, row.begin());
    std::copy_n(gv.row(0).begin(), c2, row.begin() + static_cast<std::ptrdiff_t>(c1));
  }
  const auto pi = per_point.id(), gi = global.id();
  return finish(
      tape, std::move(out), {pi, gi},
      [pi, gi, n, c1, c2](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(pi)) {
          Tensor& acc = t.grad(pi);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c1; ++j) acc(r, j) += g(r, j);
          }
        }
        if (t.requires_grad(gi)) {
          Tensor& acc = t.grad(gi);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < c2; ++j) acc[j] += g(r, c1 + j);
          }
        }
      },
      "concat_broadcast");
}

Var vstack(const Var& top, const Var& bottom) {
  Tape& tape = same_tape({&top, &bottom});
  const auto& a = top.value();
  const auto& b = bottom.value();
  if (a.cols() != b.cols()) throw ShapeError("vstack: " + dims(a) + " over " + dims(b));
  std::vector<double> values(a.values().begin(), a.values().end());
  values.insert(values.end(), b.values().begin(), b.values().end());
  const auto ai = top.id(), bi = bottom.id();
  const std::size_t split = a.size();
  return finish(
      tape, Tensor(a.rows() + b.rows(), a.cols(), std::move(values)), {ai, bi},
      [ai, bi, split](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        if (t.requires_grad(ai)) {
          Tensor& acc = t.grad(ai);
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
        if (t.requires_grad(bi)) {
          Tensor& acc = t.grad(bi);
          for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[split + k];
        }
      },
      "vstack");
}

Var mask_column(const Var& x, std::size_t col) {
  Tape& tape = *x.tape();
  Tensor out = x.value();
  if (col >= out.cols()) throw ShapeError("mask_column: column out of range");
  for (std::size_t r = 0; r < out.rows(); ++r) out(r, col) = 0.0;
  const auto xi = x.id();
  return finish(
      tape, std::move(out), {xi},
      [xi, col](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor& acc = t.grad(xi);
        for (std::size_t r = 0; r < acc.rows(); ++r) {
          for (std::size_t j = 0; j < acc.cols(); ++j) {
            if (j != col) acc(r, j) += g(r, j);
          }
        }
      },
      "mask_column");
}

Var affine_couple(const Var& x, const Var& s, const Var& t, std::size_t col,
                  double max_abs_log_scale) {
  Tape& tape = same_tape({&x, &s, &t});
  const auto& xv = x.value();
  const auto& sv = s.value();
  const auto& tv = t.value();
  const std::size_t n = xv.rows();
  if (col >= xv.cols()) throw ShapeError("affine_couple: column out of range");
  require_shape(sv, n, 1, "affine_couple s");
  require_shape(tv, n, 1, "affine_couple t");
  Tensor out = xv;
  Tensor scale_factor(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    if (!(std::abs(sv[r]) <= max_abs_log_scale)) {
      throw NumericError("affine coupling log-scale " + std::to_string(sv[r]) +
                         " exceeds the exp overflow guard");
    }
    scale_factor[r] = std::exp(sv[r]);
    out(r, col) = xv(r, col) * scale_factor[r] + tv[r];
  }
  const auto xi = x.id(), si = s.id(), ti = t.id();
  return finish(
      tape, std::move(out), {xi, si, ti},
      [xi, si, ti, col, n, scale_factor = std::move(scale_factor)](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv = tp.value(xi);
        if (tp.requires_grad(xi)) {
          Tensor& acc = tp.grad(xi);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < acc.cols(); ++j) {
              acc(r, j) += j == col ? g(r, j) * scale_factor[r] : g(r, j);
            }
          }
        }
        if (tp.requires_grad(si)) {
          Tensor& acc = tp.grad(si);
          for (std::size_t r = 0; r < n; ++r) acc[r] += g(r, col) * xv(r, col) * scale_factor[r];
        }
        if (tp.requires_grad(ti)) {
          Tensor& acc = tp.grad(ti);
          for (std::size_t r = 0; r < n; ++r) acc[r] += g(r, col);
        }
      },
      "affine_couple");
}

namespace {

std::vector<Vec3> rows_as_points(const Tensor& t, std::string_view what) {
  if (t.cols() != 3) throw ShapeError(std::string(what) + " must be Nx3, got " + dims(t));
  if (t.rows() == 0) throw ShapeError(std::string(what) + " is empty");
  std::vector<Vec3> pts(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) pts[r] = {t(r, 0), t(r, 1), t(r, 2)};
  return pts;
}

}  // namespace

Var chamfer_loss(const Var& pred, const Tensor& target) {
  Tape& tape = *pred.tape();
  const auto p = rows_as_points(pred.value(), "chamfer pred");
  const auto q = rows_as_points(target, "chamfer target");
  ChamferMatch match = chamfer_match(p, q, tape.track_ties());
  if (tape.track_ties()) tape.note_kink(match.min_tie_gap);
  const double value = match.value;
  const auto pi = pred.id();
  return finish(
      tape, Tensor::scalar(value), {pi},
      [pi, target, match = std::move(match)](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        const Tensor& pv = t.value(pi);
        Tensor& acc = t.grad(pi);
        const double n = static_cast<double>(pv.rows());
        const double m = static_cast<double>(target.rows());
        for (std::size_t i = 0; i < pv.rows(); ++i) {
          const auto j = match.a_to_b[i];
          for (std::size_t k = 0; k < 3; ++k) {
            acc(i, k) += g * 2.0 / n * (pv(i, k) - target(j, k));
          }
        }
        for (std::size_t j = 0; j < target.rows(); ++j) {
          const auto i = match.b_to_a[j];
          for (std::size_t k = 0; k < 3; ++k) {
            acc(i, k) += g * 2.0 / m * (pv(i, k) - target(j, k));
          }
        }
      },
      "chamfer_loss");
}

}  // namespace meshflow
