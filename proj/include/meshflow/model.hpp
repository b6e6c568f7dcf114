#pragma once

#include <cstdint>
#include <vector>

#include "meshflow/autoencoder.hpp"
#include "meshflow/flow.hpp"

namespace meshflow {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  FlowConfig flow;

  std::size_t code_dim() const { return encoder.code_dim; }
  std::size_t blocks() const { return flow.blocks; }
};

/// Autoencoder plus conditional flow, initialized from one seed.
struct Model {
  ModelConfig config;
  Encoder encoder;
  Decoder decoder;
  FlowModel flow;

  static Model create(const ModelConfig& config, std::uint64_t seed);

  std::vector<Parameter*> encoder_parameters() { return encoder.parameters(); }
  std::vector<Parameter*> decoder_parameters() { return decoder.parameters(); }
  std::vector<Parameter*> flow_parameters() { return flow.parameters(); }
  std::vector<Parameter*> parameters();
  std::size_t parameter_count();
};

}  // namespace meshflow
