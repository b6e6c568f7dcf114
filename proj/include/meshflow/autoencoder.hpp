#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "meshflow/geometry.hpp"
#include "meshflow/layers.hpp"
#include "meshflow/optim.hpp"

namespace meshflow {

/// Point-wise conv widths before the code layer, e.g. 3 -> 64 -> 128 -> 256 -> D.
struct EncoderConfig {
  std::vector<std::size_t> widths{64, 128, 256};
  std::size_t code_dim = 1024;
};

/// Fully connected widths between the code and the m x 3 output.
struct DecoderConfig {
  std::vector<std::size_t> widths{512, 1024};
  std::size_t num_points = 5000;
};

/// Fixed-length code of a point cloud.
using Encoding = std::vector<double>;

/// (linear -> batchnorm -> relu) per layer, then max over points.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::mt19937_64& rng);

  /// points: N x 3 -> 1 x code_dim.
  Var forward(Tape& tape, const Var& points, NormMode mode);

  const EncoderConfig& config() const { return config_; }
  std::size_t code_dim() const { return config_.code_dim; }
  std::vector<Parameter*> parameters();
  std::vector<LinearLayer>& convs() { return convs_; }
  std::vector<BatchNormLayer>& norms() { return norms_; }
  const std::vector<LinearLayer>& convs() const { return convs_; }
  const std::vector<BatchNormLayer>& norms() const { return norms_; }

 private:
  EncoderConfig config_;
  std::vector<LinearLayer> convs_;
  std::vector<BatchNormLayer> norms_;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(const DecoderConfig& config, std::size_t code_dim, std::mt19937_64& rng);

  /// code: 1 x D -> num_points x 3.
  Var forward(Tape& tape, const Var& code);

  const DecoderConfig& config() const { return config_; }
  std::size_t num_points() const { return config_.num_points; }
  std::vector<Parameter*> parameters();
  std::vector<LinearLayer>& layers() { return layers_; }

 private:
  DecoderConfig config_;
  std::vector<LinearLayer> layers_;
};

Tensor cloud_to_tensor(const PointCloud& cloud);
PointCloud tensor_to_cloud(const Tensor& t);
Tensor mesh_vertices_tensor(const Mesh& mesh);

/// Code of `cloud`; in eval mode this is exactly invariant to point order.
Encoding encode(const PointCloud& cloud, Encoder& encoder, NormMode mode = NormMode::eval);

/// Decodes `code`; `m` must equal the decoder's output size.
PointCloud decode(const Encoding& code, Decoder& decoder, std::size_t m);

struct AePretrainResult {
  double loss = 0.0;  // L_CDR before the update
};

/// encode (train mode) -> decode -> chamfer reconstruction loss -> backward ->
/// one Adam step over encoder and decoder parameters.
AePretrainResult ae_pretrain_step(const PointCloud& cloud, Encoder& encoder, Decoder& decoder,
                                  AdamState& state, const AdamHyper& hyper);

}  // namespace meshflow
