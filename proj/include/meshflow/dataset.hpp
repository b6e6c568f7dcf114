#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "meshflow/geometry.hpp"

namespace meshflow {

enum class DatasetId { A, B, C, D };
enum class Split { train, test };

std::string to_string(DatasetId id);
DatasetId parse_dataset_id(std::string_view text);
std::string to_string(Split split);
Split parse_split(std::string_view text);

struct ObjectSource {
  std::string id;
  Mesh mesh;  // raw coordinates; normalized during generation
};

/// Dataset recipe. A and B: one trajectory per object, test = steps divisible
/// by five. C and D: many trajectories per object, train = first 80% of them.
/// A and C hold exactly one object.
struct DatasetSpec {
  DatasetId id = DatasetId::A;
  std::vector<ObjectSource> objects;
  std::uint64_t seed = 0;
  double sigma = 0.01;
  std::size_t trajectories = 1;
  std::size_t steps = 50;
  std::size_t points = 5000;

  /// Paper-scale trajectory/step counts for `id` (A/B: 1 x 50, C/D: 1000 x 21).
  static DatasetSpec preset(DatasetId id);
};

struct ManifestEntry {
  std::string object_id;
  std::size_t trajectory = 0;
  std::size_t step = 0;  // 1-based; step 0 is the template
  Split split = Split::train;
  std::string mesh_path;        // relative to the manifest directory
  std::string pointcloud_path;  // relative to the manifest directory
  std::string template_path;    // relative to the manifest directory

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  DatasetId dataset_id = DatasetId::A;
  std::uint64_t seed = 0;
  double sigma = 0.0;
  std::size_t trajectories = 0;
  std::size_t steps = 0;
  std::size_t points = 0;
  std::vector<std::string> objects;
  std::vector<ManifestEntry> entries;

  std::size_t count(Split split) const;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Split of a deformed state under the rules of `id`.
Split split_for(DatasetId id, std::size_t trajectory, std::size_t trajectories,
                std::size_t step);
/// Number of leading trajectories used for training in C/D.
std::size_t train_trajectory_count(std::size_t trajectories);

/// Seed for a (base, object, trajectory, step, stream) tuple (SplitMix64).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t object, std::uint64_t trajectory,
                          std::uint64_t step, std::uint64_t stream);

/// Manifest implied by the spec without generating anything. Paths follow
/// `<object>/<traj>/<step>.{obj,xyz}` relative to `<root>/<dataset_id>`.
DatasetManifest plan_dataset(const DatasetSpec& spec);

/// Generates every trajectory, writes meshes, clouds and templates under
/// `<root>/<dataset_id>/`, and writes `manifest.json` there.
DatasetManifest build_dataset(const DatasetSpec& spec, const std::filesystem::path& root);

/// One deformed state held in memory.
struct Sample {
  std::string object_id;
  std::size_t trajectory = 0;
  std::size_t step = 0;
  Split split = Split::train;
  std::shared_ptr<const Mesh> templ;  // normalized template, shared per object
  Mesh deformed;
  PointCloud cloud;
};

/// Same content as build_dataset, without touching the filesystem.
std::vector<Sample> generate_samples(const DatasetSpec& spec);

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Reads the files referenced by a manifest located at `manifest_path`.
/// With `split` set, only entries of that split are loaded.
std::vector<Sample> load_samples(const std::filesystem::path& manifest_path,
                                 std::optional<Split> split = std::nullopt);

/// Objects from mesh files; ids are the file stems.
std::vector<ObjectSource> load_objects(const std::vector<std::filesystem::path>& paths);

}  // namespace meshflow
