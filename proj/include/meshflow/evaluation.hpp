#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "meshflow/checkpoint.hpp"
#include "meshflow/dataset.hpp"

namespace meshflow {

inline constexpr const char* kAllObjects = "ALL";

/// `entry` identifies a single deformed state ("traj/step"); it is empty on
/// per-object and aggregate rows.
struct MetricsRow {
  std::string experiment_id;
  std::string train_set;
  std::string test_set;
  std::string object_id;
  std::string entry;
  std::string metric;  // L_CDR, L_CDD or per_vertex_L2
  double value = 0.0;
  std::size_t n_samples = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  /// Rows with the given metric and no entry id, optionally for one object.
  std::optional<MetricsRow> find(const std::string& object_id, const std::string& metric) const;
  void write_csv(const std::filesystem::path& path) const;
  static MetricsTable read_csv(const std::filesystem::path& path);
};

/// Mean distance between corresponding vertices.
double per_vertex_l2(const Mesh& a, const Mesh& b);

struct EvalOptions {
  std::string experiment_id;
  std::string train_set;
  std::string test_set;
  std::size_t jobs = 1;
  /// Writes every predicted mesh as `<dir>/<object>/<traj>/<step>.obj`.
  std::optional<std::filesystem::path> dump_meshes;
};

/// Per-entry, per-object and aggregate (object ALL) rows of L_CDD and
/// per-vertex L2 for the samples of `split`.
MetricsTable evaluate(const Checkpoint& ckpt, const std::vector<Sample>& samples, Split split,
                      const EvalOptions& options = {});
MetricsTable evaluate(const Checkpoint& ckpt, const std::filesystem::path& manifest, Split split,
                      const EvalOptions& options = {});

/// Sample-weighted per-object means of the per-entry rows (or of the
/// per-object rows when no per-entry rows exist).
MetricsTable per_object_breakdown(const MetricsTable& table);

struct AdaptiveResult {
  MetricsTable table;  // L_CDD rows with entry "low_res" and "high_res"
  Mesh low;
  Mesh high;
  std::size_t coincident = 0;  // high-res vertices bitwise equal to a low-res vertex
  std::size_t mismatched = 0;  // of those, how many deformed differently
};

/// Deforms both templates with one encoding of `cloud`. Each L_CDD is taken
/// against the matching ground-truth mesh when given, else against `cloud`.
AdaptiveResult adaptive_resolution_eval(const Checkpoint& ckpt, const Mesh& low_res_template,
                                        const Mesh& high_res_template, const PointCloud& cloud,
                                        const Mesh* low_res_truth = nullptr,
                                        const Mesh* high_res_truth = nullptr);

enum class Precision { f32, f64 };
std::string to_string(Precision p);
Precision parse_precision(std::string_view text);

struct BenchReport {
  std::size_t vertex_count = 0;
  std::size_t point_count = 0;
  std::size_t blocks = 0;
  std::size_t code_dim = 0;
  Precision precision = Precision::f32;
  std::size_t warmup_iters = 0;
  std::size_t timed_iters = 0;
  std::size_t threads = 1;
  double mean_s = 0.0;
  double p50_s = 0.0;
  double p95_s = 0.0;
  double throughput_hz = 0.0;
  std::string hardware;
  std::vector<double> samples_s;

  std::string to_json() const;
};

inline constexpr std::size_t kMinTimedIters = 30;

/// Times encode + flow over `iters` runs after `warmup` untimed runs.
BenchReport bench_inference(const Checkpoint& ckpt, const Mesh& templ, const PointCloud& cloud,
                            std::size_t iters = 50, std::size_t warmup = 5,
                            Precision precision = Precision::f32);

std::string hardware_descriptor();

}  // namespace meshflow
