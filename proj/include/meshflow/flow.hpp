#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "meshflow/autoencoder.hpp"
#include "meshflow/geometry.hpp"
#include "meshflow/layers.hpp"

namespace meshflow {

struct FlowConfig {
  std::size_t blocks = 6;
  std::size_t proj_dim = 128;
  std::size_t hidden = 256;
  /// Empty means the cycle 0,1,2,0,1,2,...
  std::vector<std::size_t> masked_dims;
  double max_abs_log_scale = 30.0;
};

/// Pointwise two-layer conditioner over [proj(x) | enc]. The first layer's
/// weight is stored as two blocks so the projection can be folded into it.
struct ConditionerMap {
  Parameter w_feat;  // P x H
  Parameter w_enc;   // D x H
  Parameter bias;    // 1 x H
  LinearLayer out;   // H x 1, zero-initialized
};

struct CouplingBlock {
  std::size_t masked_dim = 0;
  LinearLayer proj;      // 3 x P
  ConditionerMap map_s;  // relu hidden layer, 2 tanh(.) output
  ConditionerMap map_t;  // linear
};

/// How the tape evaluates the first conditioner layer. Both give the same
/// function; `fused` multiplies the 3 x P projection into the P x H weight
/// before touching per-vertex data, `reference` materializes the
/// V x (P + D) concatenation.
enum class CouplingRoute { fused, reference };

class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(const FlowConfig& config, std::size_t code_dim, std::mt19937_64& rng);

  /// coords: V x 3, enc: 1 x D.
  Var forward(Tape& tape, const Var& coords, const Var& enc,
              CouplingRoute route = CouplingRoute::fused);
  Var block_forward(Tape& tape, std::size_t k, const Var& coords, const Var& enc,
                    CouplingRoute route = CouplingRoute::fused);

  const FlowConfig& config() const { return config_; }
  std::size_t code_dim() const { return code_dim_; }
  std::size_t size() const { return blocks_.size(); }
  std::vector<CouplingBlock>& blocks() { return blocks_; }
  const std::vector<CouplingBlock>& blocks() const { return blocks_; }
  std::vector<Parameter*> parameters();

 private:
  FlowConfig config_;
  std::size_t code_dim_ = 0;
  std::vector<CouplingBlock> blocks_;
};

std::vector<std::size_t> default_masked_dims(std::size_t blocks);

// Tape-free evaluation in float64. Every vertex is transformed on its own, so
// results for a vertex never depend on the other vertices.

Tensor coupling_forward(const Tensor& coords, const Encoding& enc, const CouplingBlock& block,
                        double max_abs_log_scale = 30.0);
Tensor coupling_inverse(const Tensor& coords, const Encoding& enc, const CouplingBlock& block,
                        double max_abs_log_scale = 30.0);
Tensor flow_deform(const Tensor& coords, const Encoding& enc, const FlowModel& model);
Tensor flow_inverse(const Tensor& coords, const Encoding& enc, const FlowModel& model);

/// Template with its vertices moved by the flow; the face list is copied
/// unchanged.
Mesh deform_mesh(const Mesh& templ, const Encoding& enc, const FlowModel& model);

}  // namespace meshflow
