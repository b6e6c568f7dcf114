#include "meshflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "meshflow/error.hpp"
#include "meshflow/optim.hpp"

namespace meshflow {

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::pretrain_ae: return "pretrain_ae";
    case Stage::train_flow: return "train_flow";
    case Stage::end_to_end: return "end_to_end";
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  if (text == "pretrain_ae") return Stage::pretrain_ae;
  if (text == "train_flow") return Stage::train_flow;
  if (text == "end_to_end") return Stage::end_to_end;
  throw ConfigError("invalid stage '" + std::string(text) +
                    "' (expected pretrain_ae, train_flow or end_to_end)");
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,split,loss_name,value\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.epoch << ',' << r.split << ',' << r.loss_name << ',' << buf << '\n';
  }
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch,
                                     std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, stream, epoch, 0, 0));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<const Sample*> usable(const TrainConfig& cfg, const std::vector<Sample>& train) {
  std::vector<const Sample*> out;
  for (const auto& s : train) {
    if (s.split != Split::train) continue;
    out.push_back(&s);
    if (cfg.max_train_entries != 0 && out.size() == cfg.max_train_entries) break;
  }
  if (out.empty()) throw ConfigError("training split is empty");
  return out;
}

[[noreturn]] void rethrow_numeric(const NumericError& e, std::size_t step) {
  throw NumericError("training step " + std::to_string(step) + ": " + e.what());
}

}  // namespace

TrainResult pretrain_autoencoder(const TrainConfig& cfg, const std::vector<Sample>& train,
                                 const StepHook& hook) {
  const auto samples = usable(cfg, train);
  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  ckpt.model = Model::create(cfg.model, cfg.seed);
  ckpt.stage = to_string(Stage::pretrain_ae);
  const AdamHyper hyper{cfg.ae_lr};
  Encoder& encoder = ckpt.model.encoder;
  Decoder& decoder = ckpt.model.decoder;
  auto params = encoder.parameters();
  for (auto* p : decoder.parameters()) params.push_back(p);

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.ae_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t idx : epoch_order(samples.size(), cfg.seed, epoch, 1)) {
      const Sample& s = *samples[idx];
      try {
        zero_grads(params);
        Tape tape;
        const Tensor target = cloud_to_tensor(s.cloud);
        const Var code = encoder.forward(tape, tape.constant(target), NormMode::train);
        const Var recon = decoder.forward(tape, code);
        const Var loss = chamfer_loss(recon, target);
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericError("non-finite L_CDR");
        if (hook) hook({epoch, step, &s, value, &recon.value(), &target});
        tape.backward(loss);
        adam_step(params, ckpt.ae_optimizer, hyper);
        total += value;
      } catch (const NumericError& e) {
        rethrow_numeric(e, step);
      }
      ++step;
    }
    result.metrics.push_back({epoch, "train", "L_CDR", total / static_cast<double>(samples.size())});
  }
  return result;
}

TrainResult train_flow(const TrainConfig& cfg, Checkpoint start, const std::vector<Sample>& train,
                       const StepHook& hook) {
  require_compatible(start, cfg.model.code_dim(), cfg.model.blocks());
  const auto samples = usable(cfg, train);
  const bool frozen = cfg.stage == Stage::train_flow && cfg.encoder_frozen;
  TrainResult result;
  result.checkpoint = std::move(start);
  Checkpoint& ckpt = result.checkpoint;
  ckpt.stage = to_string(cfg.stage == Stage::end_to_end ? Stage::end_to_end : Stage::train_flow);
  Encoder& encoder = ckpt.model.encoder;
  FlowModel& flow = ckpt.model.flow;
  const AdamHyper hyper{cfg.flow_lr};

  auto params = flow.parameters();
  if (!frozen) {
    for (auto* p : encoder.parameters()) params.push_back(p);
  }

  // A frozen encoder is a constant function of the cloud, so its codes are
  // computed once (eval mode) and reused every epoch.
  std::vector<Tensor> codes;
  std::vector<Tensor> templates;
  std::vector<Tensor> targets;
  for (const Sample* s : samples) {
    if (!s->templ || s->templ->faces != s->deformed.faces) {
      throw ConfigError("sample " + s->object_id + " lacks a matching template");
    }
    templates.push_back(mesh_vertices_tensor(*s->templ));
    targets.push_back(mesh_vertices_tensor(s->deformed));
    if (frozen) codes.push_back(Tensor::row_vector(encode(s->cloud, encoder, NormMode::eval)));
  }

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.flow_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t idx : epoch_order(samples.size(), cfg.seed, epoch, 2)) {
      const Sample& s = *samples[idx];
      try {
        zero_grads(params);
        Tape tape;
        // An unfrozen encoder keeps its pretrained batchnorm statistics so the
        // flow is trained on the same codes it sees at inference.
        const Var code = frozen ? tape.constant(codes[idx])
                                : encoder.forward(tape, tape.constant(cloud_to_tensor(s.cloud)),
                                                  NormMode::eval);
        const Var pred = flow.forward(tape, tape.constant(templates[idx]), code);
        const Var loss = chamfer_loss(pred, targets[idx]);
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericError("non-finite L_CDD");
        if (hook) hook({epoch, step, &s, value, &pred.value(), &targets[idx]});
        tape.backward(loss);
        adam_step(params, ckpt.flow_optimizer, hyper);
        total += value;
      } catch (const NumericError& e) {
        rethrow_numeric(e, step);
      }
      ++step;
    }
    result.metrics.push_back({epoch, "train", "L_CDD", total / static_cast<double>(samples.size())});
  }
  return result;
}

TrainResult run_training(const TrainConfig& cfg, const std::vector<Sample>& train,
                         std::optional<Checkpoint> start, const StepHook& hook) {
  switch (cfg.stage) {
    case Stage::pretrain_ae:
      return pretrain_autoencoder(cfg, train, hook);
    case Stage::train_flow:
      if (!start) throw ConfigError("train_flow needs an autoencoder checkpoint");
      return train_flow(cfg, std::move(*start), train, hook);
    case Stage::end_to_end: {
      TrainResult ae = pretrain_autoencoder(cfg, train, hook);
      TrainResult flow = train_flow(cfg, std::move(ae.checkpoint), train, hook);
      ae.metrics.insert(ae.metrics.end(), flow.metrics.begin(), flow.metrics.end());
      flow.metrics = std::move(ae.metrics);
      return flow;
    }
  }
  throw ConfigError("unknown stage");
}

TrainResult run_training(const TrainConfig& cfg, std::optional<Checkpoint> start) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest given");
  return run_training(cfg, load_samples(cfg.manifest, Split::train), std::move(start));
}

}  // namespace meshflow
