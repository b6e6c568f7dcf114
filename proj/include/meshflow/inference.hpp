#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "meshflow/autoencoder.hpp"
#include "meshflow/flow.hpp"
#include "meshflow/geometry.hpp"

namespace meshflow {

// Tape-free evaluation engines, instantiated for float and double. Weights are
// folded once at construction (eval-mode batchnorm into the preceding linear
// layer, the coordinate projection into each conditioner's first layer), so
// the per-call work is the encoder GEMMs plus a short per-vertex loop.

template <typename T>
class EncoderEngine {
 public:
  explicit EncoderEngine(const Encoder& encoder, double bn_eps = 1e-5);

  /// points: n x 3 row-major, n >= 1.
  Encoding encode(const T* points, std::size_t n) const;
  Encoding encode(const PointCloud& cloud) const;
  std::size_t code_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

 private:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<T> w;
    std::vector<T> b;
  };
  std::vector<Layer> layers_;
  std::size_t max_width_ = 0;
};

template <typename T>
class FlowEngine;

/// A flow with the encoding applied; transforms vertices in place.
template <typename T>
class ConditionedFlow {
 public:
  void forward(T* xyz, std::size_t n) const;
  void inverse(T* xyz, std::size_t n) const;

 private:
  friend class FlowEngine<T>;
  explicit ConditionedFlow(const FlowEngine<T>& engine) : engine_(&engine) {}
  const FlowEngine<T>* engine_;
  std::vector<std::vector<T>> shift_s_;  // per block, H
  std::vector<T> shift_t_;               // per block
};

template <typename T>
class FlowEngine {
 public:
  explicit FlowEngine(const FlowModel& model);
  /// Single block, reported as block `index` in errors.
  FlowEngine(const CouplingBlock& block, std::size_t index, double max_abs_log_scale);

  /// Throws ConfigError if the encoding size does not match.
  ConditionedFlow<T> condition(const Encoding& enc) const;
  std::size_t code_dim() const { return code_dim_; }

 private:
  friend class ConditionedFlow<T>;
  struct Block {
    std::size_t index = 0;
    std::size_t dim = 0;
    std::size_t hidden = 0;
    std::vector<T> fold_s;           // 3 x H
    std::vector<T> w_out_s;          // H
    T b_out_s = 0;
    std::array<T, 3> g_t{};          // t = c_t + sum_k g_t[k] x[k]
    std::vector<double> base_s;      // H, encoding-free part of the shift
    std::vector<double> w_enc_s;     // D x H
    double base_t = 0.0;
    std::vector<double> u_t;         // D
  };
  void add_block(const CouplingBlock& block, std::size_t index);
  void scale_shift(const Block& b, const T* x, const std::vector<T>& shift_s, T shift_t,
                   T& s, T& t) const;

  std::vector<Block> blocks_;
  std::size_t code_dim_ = 0;
  double limit_ = 30.0;
};

/// Encoder plus flow, as used at inference time (the decoder is not needed).
template <typename T>
class InferenceModel {
 public:
  InferenceModel(const Encoder& encoder, const FlowModel& flow);

  /// out (n_vertices x 3) = flow(templ | encode(cloud)).
  void run(const T* cloud, std::size_t n_points, const T* templ, T* out,
           std::size_t n_vertices) const;
  Encoding encode(const PointCloud& cloud) const { return encoder_.encode(cloud); }
  Mesh deform(const Mesh& templ, const Encoding& enc) const;
  Mesh deform(const Mesh& templ, const PointCloud& cloud) const;

 private:
  EncoderEngine<T> encoder_;
  FlowEngine<T> flow_;
};

extern template class EncoderEngine<float>;
extern template class EncoderEngine<double>;
extern template class FlowEngine<float>;
extern template class FlowEngine<double>;
extern template class ConditionedFlow<float>;
extern template class ConditionedFlow<double>;
extern template class InferenceModel<float>;
extern template class InferenceModel<double>;

}  // namespace meshflow
