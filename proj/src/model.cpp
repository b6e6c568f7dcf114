#include "meshflow/model.hpp"

#include <random>

namespace meshflow {

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
  // Separate streams keep, e.g., the flow initialization independent of the
  // decoder size.
  std::seed_seq enc_seq{seed, std::uint64_t{1}};
  std::seed_seq dec_seq{seed, std::uint64_t{2}};
  std::seed_seq flow_seq{seed, std::uint64_t{3}};
  std::mt19937_64 enc_rng(enc_seq);
  std::mt19937_64 dec_rng(dec_seq);
  std::mt19937_64 flow_rng(flow_seq);
  Model m;
  m.encoder = Encoder(config.encoder, enc_rng);
  m.decoder = Decoder(config.decoder, config.encoder.code_dim, dec_rng);
  m.flow = FlowModel(config.flow, config.encoder.code_dim, flow_rng);
  m.config = config;
  m.config.flow = m.flow.config();  // masked dims resolved
  return m;
}

std::vector<Parameter*> Model::parameters() {
  auto out = encoder.parameters();
  for (auto* p : decoder.parameters()) out.push_back(p);
  for (auto* p : flow.parameters()) out.push_back(p);
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

}  // namespace meshflow
