#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "meshflow/tensor.hpp"

namespace meshflow {

/// A named learnable tensor. `grad` is the accumulator filled by
/// Tape::backward; frozen parameters still receive gradients but the
/// optimizer never updates them.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {}

  void zero_grad() { grad = Tensor(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  /// Gradient of the last backward pass w.r.t. this node (zeros if the node
  /// did not influence the loss).
  Tensor grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records executed operations for one forward pass; `backward` replays them
/// in exact reverse order. A tape is single-threaded and single-use.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never needs a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is kept (used by gradient checks).
  Var input(Tensor value);
  /// Leaf bound to a parameter. Binding the same parameter twice returns the
  /// same node, so its accumulator is written exactly once per backward.
  Var param(Parameter& p);

  /// Seeds d(loss)/d(loss) = 1, runs every recorded backward function in
  /// reverse, then adds the leaf gradients into the bound parameters.
  void backward(const Var& loss);

  // Used by op implementations.
  // Called with the id of the node the function was recorded for.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Lazily-zeroed gradient buffer of a node.
  Tensor& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  std::size_t size() const { return nodes_.size(); }

  /// Non-differentiable points (ReLU at 0, max ties, nearest-neighbour
  /// switches) report their distance to the kink here. Gradient checks use it
  /// to reject inputs that sit on a kink.
  void note_kink(double margin) {
    if (margin < kink_margin_) kink_margin_ = margin;
  }
  double kink_margin() const { return kink_margin_; }
  bool track_ties() const { return track_ties_; }
  void set_track_ties(bool on) { track_ties_ = on; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
  double kink_margin_ = std::numeric_limits<double>::infinity();
  bool track_ties_ = false;
};

// ---------------------------------------------------------------------------
// Operations. Shapes are (rows x cols); "points" are rows.

/// Shared per-point linear map (a 1x1 convolution over points):
/// out[n, :] = x[n, :] * w + b. `b` is 1 x Cout.
Var pointwise_linear(const Var& x, const Var& w, const Var& b);
Var pointwise_linear(const Var& x, const Var& w);

Var relu(const Var& x);
Var tanh(const Var& x);
Var scale(const Var& x, double factor);
Var add(const Var& a, const Var& b);
/// Sum of all entries, 1 x 1.
Var sum(const Var& x);
/// sum_ij weights(i, j) * x(i, j), 1 x 1.
Var weighted_sum(const Var& x, const Tensor& weights);
Var reshape(const Var& x, std::size_t rows, std::size_t cols);

enum class NormMode { train, eval };

struct BatchNormStats {
  Tensor running_mean;  // 1 x C
  Tensor running_var;   // 1 x C
};

struct BatchNormOptions {
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;
};

/// Per-channel normalization over the point axis. Train mode normalizes with
/// the batch (biased) statistics and updates `stats`; eval mode uses `stats`
/// unchanged.
Var batchnorm_points(const Var& x, const Var& gamma, const Var& beta,
                     BatchNormStats& stats, NormMode mode,
                     const BatchNormOptions& options = {});

/// Per-channel max over points (1 x C). The gradient goes to the first row
/// attaining the maximum.
Var maxpool_points(const Var& x);

/// [per_point | global] with the 1 x C2 global row repeated for every point.
Var concat_broadcast(const Var& per_point, const Var& global);

/// Row-wise stacking of two matrices with equal column counts.
Var vstack(const Var& top, const Var& bottom);

/// Copy of x with column `col` set to zero.
Var mask_column(const Var& x, std::size_t col);

/// Copy of x whose column `col` becomes x[:, col] * exp(s) + t. `s` and `t`
/// are N x 1. Throws NumericError if |s| exceeds `max_abs_log_scale`.
Var affine_couple(const Var& x, const Var& s, const Var& t, std::size_t col,
                  double max_abs_log_scale = 30.0);

/// Symmetric chamfer distance between the rows of `pred` (N x 3) and the
/// constant `target` (M x 3); equals chamfer_bruteforce on the same points.
Var chamfer_loss(const Var& pred, const Tensor& target);

}  // namespace meshflow
