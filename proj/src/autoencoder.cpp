#include "meshflow/autoencoder.hpp"

#include <string>

#include "meshflow/error.hpp"

namespace meshflow {

Encoder::Encoder(const EncoderConfig& config, std::mt19937_64& rng) : config_(config) {
  if (config.code_dim == 0) throw ConfigError("encoder code_dim must be > 0");
  std::size_t in = 3;
  std::vector<std::size_t> outs = config.widths;
  outs.push_back(config.code_dim);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    if (outs[i] == 0) throw ConfigError("encoder widths must be > 0");
    const std::string name = "encoder.conv" + std::to_string(i);
    convs_.emplace_back(name, in, outs[i], rng);
    norms_.emplace_back("encoder.bn" + std::to_string(i), outs[i]);
    in = outs[i];
  }
}

Var Encoder::forward(Tape& tape, const Var& points, NormMode mode) {
  if (points.cols() != 3) throw ShapeError("encoder input must be N x 3");
  Var h = points;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = relu(norms_[i].forward(tape, convs_[i].forward(tape, h), mode));
  }
  return maxpool_points(h);
}

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.push_back(&convs_[i].weight);
    out.push_back(&convs_[i].bias);
    out.push_back(&norms_[i].gamma);
    out.push_back(&norms_[i].beta);
  }
  return out;
}

Decoder::Decoder(const DecoderConfig& config, std::size_t code_dim, std::mt19937_64& rng)
    : config_(config) {
  if (config.num_points == 0) throw ConfigError("decoder num_points must be > 0");
  std::size_t in = code_dim;
  std::vector<std::size_t> outs = config.widths;
  outs.push_back(3 * config.num_points);
  for (std::size_t i = 0; i < outs.size(); ++i) {
    if (outs[i] == 0) throw ConfigError("decoder widths must be > 0");
    layers_.emplace_back("decoder.fc" + std::to_string(i), in, outs[i], rng);
    in = outs[i];
  }
}

Var Decoder::forward(Tape& tape, const Var& code) {
  if (code.rows() != 1) throw ShapeError("decoder input must be 1 x D");
  Var h = code;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(tape, h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return reshape(h, config_.num_points, 3);
}

std::vector<Parameter*> Decoder::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

Tensor cloud_to_tensor(const PointCloud& cloud) {
  Tensor t(cloud.size(), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) t(i, k) = cloud.points[i][k];
  }
  return t;
}

PointCloud tensor_to_cloud(const Tensor& t) {
  if (t.cols() != 3) throw ShapeError("point tensor must be N x 3");
  PointCloud cloud;
  cloud.points.resize(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) cloud.points[i] = {t(i, 0), t(i, 1), t(i, 2)};
  return cloud;
}

Tensor mesh_vertices_tensor(const Mesh& mesh) { return cloud_to_tensor({mesh.vertices}); }

Encoding encode(const PointCloud& cloud, Encoder& encoder, NormMode mode) {
  validate_cloud(cloud);
  Tape tape;
  const Var code = encoder.forward(tape, tape.constant(cloud_to_tensor(cloud)), mode);
  const auto v = code.value().values();
  return {v.begin(), v.end()};
}

PointCloud decode(const Encoding& code, Decoder& decoder, std::size_t m) {
  if (m != decoder.num_points()) {
    throw ConfigError("decoder emits " + std::to_string(decoder.num_points()) +
                      " points, asked for " + std::to_string(m));
  }
  Tape tape;
  const Var out = decoder.forward(tape, tape.constant(Tensor::row_vector(code)));
  return tensor_to_cloud(out.value());
}

AePretrainResult ae_pretrain_step(const PointCloud& cloud, Encoder& encoder, Decoder& decoder,
                                  AdamState& state, const AdamHyper& hyper) {
  validate_cloud(cloud);
  auto params = encoder.parameters();
  for (auto* p : decoder.parameters()) params.push_back(p);
  zero_grads(params);
  Tape tape;
  const Var code = encoder.forward(tape, tape.constant(cloud_to_tensor(cloud)), NormMode::train);
  const Var recon = decoder.forward(tape, code);
  const Var loss = chamfer_loss(recon, cloud_to_tensor(cloud));
  tape.backward(loss);
  adam_step(params, state, hyper);
  return {loss.value().item()};
}

}  // namespace meshflow
