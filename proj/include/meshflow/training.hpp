#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "meshflow/checkpoint.hpp"
#include "meshflow/dataset.hpp"
#include "meshflow/model.hpp"

namespace meshflow {

enum class Stage { pretrain_ae, train_flow, end_to_end };

std::string to_string(Stage stage);
Stage parse_stage(std::string_view text);

struct TrainConfig {
  std::filesystem::path manifest;
  Stage stage = Stage::pretrain_ae;
  /// Only read by the train_flow stage; end_to_end always trains the encoder.
  bool encoder_frozen = true;
  ModelConfig model;
  double ae_lr = 1e-3;
  double flow_lr = 1e-4;
  std::size_t ae_epochs = 200;
  std::size_t flow_epochs = 400;
  std::uint64_t seed = 0;
  /// Keep only the first n training entries (0 = all), for desk-scale runs.
  std::size_t max_train_entries = 0;
};

struct MetricRow {
  std::size_t epoch = 0;
  std::string split;
  std::string loss_name;
  double value = 0.0;
};

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

/// Passed to the step hook after the loss is computed and before the update.
struct StepInfo {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 0-based optimizer step within the stage
  const Sample* sample = nullptr;
  double loss = 0.0;
  const Tensor* prediction = nullptr;  // decoded cloud or deformed vertices
  const Tensor* target = nullptr;
};
using StepHook = std::function<void(const StepInfo&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricRow> metrics;
};

/// ae_pretrain_step over the training clouds for cfg.ae_epochs epochs.
TrainResult pretrain_autoencoder(const TrainConfig& cfg, const std::vector<Sample>& train,
                                 const StepHook& hook = {});

/// Flow training from `start` (encoder, decoder and any previous flow state).
/// L_CDD compares the deformed template vertices with the ground-truth
/// deformed vertices.
TrainResult train_flow(const TrainConfig& cfg, Checkpoint start,
                       const std::vector<Sample>& train, const StepHook& hook = {});

/// Runs cfg.stage on the train split of cfg.manifest. train_flow needs `start`;
/// end_to_end pretrains the autoencoder first and then trains the flow with the
/// encoder unfrozen.
TrainResult run_training(const TrainConfig& cfg, const std::vector<Sample>& train,
                         std::optional<Checkpoint> start = std::nullopt,
                         const StepHook& hook = {});
TrainResult run_training(const TrainConfig& cfg, std::optional<Checkpoint> start = std::nullopt);

}  // namespace meshflow
