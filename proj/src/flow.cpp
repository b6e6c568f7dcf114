#include "meshflow/flow.hpp"

#include <string>

#include "meshflow/error.hpp"
#include "meshflow/inference.hpp"

namespace meshflow {

std::vector<std::size_t> default_masked_dims(std::size_t blocks) {
  std::vector<std::size_t> dims(blocks);
  for (std::size_t k = 0; k < blocks; ++k) dims[k] = k % 3;
  return dims;
}

namespace {

ConditionerMap make_map(const std::string& name, std::size_t proj, std::size_t code,
                        std::size_t hidden, std::mt19937_64& rng) {
  const std::size_t fan_in = proj + code;
  ConditionerMap m;
  m.w_feat = Parameter(name + ".w_feat", uniform_fan_in(fan_in, proj, hidden, rng));
  m.w_enc = Parameter(name + ".w_enc", uniform_fan_in(fan_in, code, hidden, rng));
  m.bias = Parameter(name + ".bias", uniform_fan_in(fan_in, 1, hidden, rng));
  m.out = LinearLayer(name + ".out", hidden, 1, rng);
  m.out.zero_output();
  return m;
}

// First conditioner layer applied to the masked coordinates: V x H.
Var hidden_pre(Tape& tape, CouplingBlock& block, ConditionerMap& m, const Var& xm,
               const Var& enc, CouplingRoute route) {
  const Var pw = tape.param(block.proj.weight);
  const Var pb = tape.param(block.proj.bias);
  const Var wf = tape.param(m.w_feat);
  const Var we = tape.param(m.w_enc);
  const Var b = tape.param(m.bias);
  if (route == CouplingRoute::reference) {
    const Var feat = pointwise_linear(xm, pw, pb);
    return pointwise_linear(concat_broadcast(feat, enc), vstack(wf, we), b);
  }
  const Var fold = pointwise_linear(pw, wf);
  const Var shift = add(pointwise_linear(pb, wf, b), pointwise_linear(enc, we));
  return pointwise_linear(xm, fold, shift);
}

}  // namespace

FlowModel::FlowModel(const FlowConfig& config, std::size_t code_dim, std::mt19937_64& rng)
    : config_(config), code_dim_(code_dim) {
  if (config.blocks == 0) throw ConfigError("flow needs at least one coupling block");
  if (config.proj_dim == 0 || config.hidden == 0 || code_dim == 0) {
    throw ConfigError("flow widths must be > 0");
  }
  if (config_.masked_dims.empty()) config_.masked_dims = default_masked_dims(config.blocks);
  if (config_.masked_dims.size() != config.blocks) {
    throw ConfigError("masked_dims must list one dimension per block");
  }
  for (std::size_t k = 0; k < config.blocks; ++k) {
    if (config_.masked_dims[k] > 2) throw ConfigError("masked dimension must be 0, 1 or 2");
    const std::string name = "flow.block" + std::to_string(k);
    CouplingBlock b;
    b.masked_dim = config_.masked_dims[k];
    b.proj = LinearLayer(name + ".proj", 3, config.proj_dim, rng);
    b.map_s = make_map(name + ".map_s", config.proj_dim, code_dim, config.hidden, rng);
    b.map_t = make_map(name + ".map_t", config.proj_dim, code_dim, config.hidden, rng);
    blocks_.push_back(std::move(b));
  }
}

Var FlowModel::block_forward(Tape& tape, std::size_t k, const Var& coords, const Var& enc,
                             CouplingRoute route) {
  CouplingBlock& b = blocks_.at(k);
  if (coords.cols() != 3) throw ShapeError("flow input must be V x 3");
  if (enc.rows() != 1 || enc.cols() != code_dim_) {
    throw ConfigError("encoding has " + std::to_string(enc.cols()) + " entries, flow expects " +
                      std::to_string(code_dim_));
  }
  const Var xm = mask_column(coords, b.masked_dim);
  const Var hs = relu(hidden_pre(tape, b, b.map_s, xm, enc, route));
  const Var s = scale(tanh(b.map_s.out.forward(tape, hs)), 2.0);
  const Var ht = hidden_pre(tape, b, b.map_t, xm, enc, route);
  const Var t = b.map_t.out.forward(tape, ht);
  try {
    return affine_couple(coords, s, t, b.masked_dim, config_.max_abs_log_scale);
  } catch (const NumericError& e) {
    throw NumericError("coupling block " + std::to_string(k) + ": " + e.what());
  }
}

Var FlowModel::forward(Tape& tape, const Var& coords, const Var& enc, CouplingRoute route) {
  Var x = coords;
  for (std::size_t k = 0; k < blocks_.size(); ++k) x = block_forward(tape, k, x, enc, route);
  return x;
}

std::vector<Parameter*> FlowModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : blocks_) {
    out.push_back(&b.proj.weight);
    out.push_back(&b.proj.bias);
    for (ConditionerMap* m : {&b.map_s, &b.map_t}) {
      out.push_back(&m->w_feat);
      out.push_back(&m->w_enc);
      out.push_back(&m->bias);
      out.push_back(&m->out.weight);
      out.push_back(&m->out.bias);
    }
  }
  return out;
}

namespace {

Tensor run_blocks(const Tensor& coords, const Encoding& enc, const FlowEngine<double>& engine,
                  bool inverse) {
  if (coords.cols() != 3) throw ShapeError("coordinates must be V x 3");
  coords.check_finite("flow input");
  const ConditionedFlow<double> flow = engine.condition(enc);
  Tensor out = coords;
  if (inverse) {
    flow.inverse(out.data(), out.rows());
  } else {
    flow.forward(out.data(), out.rows());
  }
  return out;
}

}  // namespace

Tensor coupling_forward(const Tensor& coords, const Encoding& enc, const CouplingBlock& block,
                        double max_abs_log_scale) {
  return run_blocks(coords, enc, FlowEngine<double>(block, 0, max_abs_log_scale), false);
}

Tensor coupling_inverse(const Tensor& coords, const Encoding& enc, const CouplingBlock& block,
                        double max_abs_log_scale) {
  return run_blocks(coords, enc, FlowEngine<double>(block, 0, max_abs_log_scale), true);
}

Tensor flow_deform(const Tensor& coords, const Encoding& enc, const FlowModel& model) {
  return run_blocks(coords, enc, FlowEngine<double>(model), false);
}

Tensor flow_inverse(const Tensor& coords, const Encoding& enc, const FlowModel& model) {
  return run_blocks(coords, enc, FlowEngine<double>(model), true);
}

Mesh deform_mesh(const Mesh& templ, const Encoding& enc, const FlowModel& model) {
  validate_mesh(templ);
  const Tensor moved = flow_deform(mesh_vertices_tensor(templ), enc, model);
  Mesh out;
  out.vertices = tensor_to_cloud(moved).points;
  out.faces = templ.faces;
  return out;
}

}  // namespace meshflow
