#include "meshflow/dataset.hpp"

#include <fstream>
#include <map>
#include <json.hpp>
#include <set>

#include "meshflow/error.hpp"
#include "meshflow/mesh_io.hpp"
#include "meshflow/warp.hpp"

namespace meshflow {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(DatasetId id) {
  switch (id) {
    case DatasetId::A: return "A";
    case DatasetId::B: return "B";
    case DatasetId::C: return "C";
    case DatasetId::D: return "D";
  }
  return "?";
}

DatasetId parse_dataset_id(std::string_view text) {
  if (text == "A") return DatasetId::A;
  if (text == "B") return DatasetId::B;
  if (text == "C") return DatasetId::C;
  if (text == "D") return DatasetId::D;
  throw ConfigError("invalid dataset id '" + std::string(text) + "' (expected A, B, C or D)");
}

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ConfigError("invalid split '" + std::string(text) + "' (expected train or test)");
}

DatasetSpec DatasetSpec::preset(DatasetId id) {
  DatasetSpec spec;
  spec.id = id;
  if (id == DatasetId::A || id == DatasetId::B) {
    spec.trajectories = 1;
    spec.steps = 50;
  } else {
    spec.trajectories = 1000;
    spec.steps = 21;
  }
  return spec;
}

std::size_t DatasetManifest::count(Split split) const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.split == split ? 1 : 0;
  return n;
}

std::size_t train_trajectory_count(std::size_t trajectories) {
  return trajectories * 4 / 5;
}

Split split_for(DatasetId id, std::size_t trajectory, std::size_t trajectories,
                std::size_t step) {
  if (id == DatasetId::A || id == DatasetId::B) {
    return step % 5 == 0 ? Split::test : Split::train;
  }
  return trajectory < train_trajectory_count(trajectories) ? Split::train : Split::test;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t object, std::uint64_t trajectory,
                          std::uint64_t step, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  for (std::uint64_t v : {object, trajectory, step, stream}) h = mix(h ^ v);
  return h;
}

namespace {

constexpr std::uint64_t kWarpStream = 1;
constexpr std::uint64_t kCloudStream = 2;

void check_spec(const DatasetSpec& spec) {
  if (spec.objects.empty()) throw ConfigError("dataset needs at least one object");
  if ((spec.id == DatasetId::A || spec.id == DatasetId::C) && spec.objects.size() != 1) {
    throw ConfigError("dataset " + to_string(spec.id) + " holds exactly one object, got " +
                      std::to_string(spec.objects.size()));
  }
  if (spec.trajectories < 1 || spec.steps < 1 || spec.points < 1) {
    throw ConfigError("dataset needs trajectories, steps and points >= 1");
  }
  if (!(spec.sigma > 0.0)) throw ConfigError("dataset sigma must be > 0");
  std::set<std::string> ids;
  for (const auto& o : spec.objects) {
    if (o.id.empty() || !ids.insert(o.id).second) {
      throw ConfigError("object ids must be unique and non-empty");
    }
  }
}

std::string entry_stem(const std::string& object, std::size_t traj, std::size_t step) {
  return object + "/" + std::to_string(traj) + "/" + std::to_string(step);
}

std::string template_rel(const std::string& object) { return object + "/template.obj"; }

DatasetManifest plan_checked(const DatasetSpec& spec) {
  DatasetManifest m;
  m.dataset_id = spec.id;
  m.seed = spec.seed;
  m.sigma = spec.sigma;
  m.trajectories = spec.trajectories;
  m.steps = spec.steps;
  m.points = spec.points;
  m.entries.reserve(spec.objects.size() * spec.trajectories * spec.steps);
  for (const auto& obj : spec.objects) {
    m.objects.push_back(obj.id);
    for (std::size_t t = 0; t < spec.trajectories; ++t) {
      for (std::size_t s = 1; s <= spec.steps; ++s) {
        const auto stem = entry_stem(obj.id, t, s);
        m.entries.push_back({obj.id, t, s, split_for(spec.id, t, spec.trajectories, s),
                             stem + ".obj", stem + ".xyz", template_rel(obj.id)});
      }
    }
  }
  return m;
}

// Calls `emit(object_index, template, trajectory, step, mesh, cloud)` for every
// deformed state in manifest order.
template <typename Emit>
void generate(const DatasetSpec& spec, Emit&& emit) {
  for (std::size_t o = 0; o < spec.objects.size(); ++o) {
    auto templ = std::make_shared<const Mesh>(normalize_unit_cube(spec.objects[o].mesh).mesh);
    for (std::size_t t = 0; t < spec.trajectories; ++t) {
      const auto field =
          sample_warp_field(derive_seed(spec.seed, o, t, 0, kWarpStream), spec.sigma);
      Mesh current = *templ;
      for (std::size_t s = 1; s <= spec.steps; ++s) {
        current = apply_warp(current, field);
        PointCloud cloud = sample_surface(
            current, spec.points, derive_seed(spec.seed, o, t, s, kCloudStream));
        emit(o, templ, t, s, current, std::move(cloud));
      }
    }
  }
}

json entry_to_json(const ManifestEntry& e) {
  return {{"object_id", e.object_id},       {"trajectory_index", e.trajectory},
          {"step_index", e.step},           {"split", to_string(e.split)},
          {"mesh_path", e.mesh_path},       {"pointcloud_path", e.pointcloud_path},
          {"template_path", e.template_path}};
}

}  // namespace

DatasetManifest plan_dataset(const DatasetSpec& spec) {
  check_spec(spec);
  return plan_checked(spec);
}

std::vector<Sample> generate_samples(const DatasetSpec& spec) {
  check_spec(spec);
  std::vector<Sample> samples;
  samples.reserve(spec.objects.size() * spec.trajectories * spec.steps);
  generate(spec, [&](std::size_t o, const std::shared_ptr<const Mesh>& templ, std::size_t t,
                     std::size_t s, const Mesh& mesh, PointCloud cloud) {
    samples.push_back({spec.objects[o].id, t, s, split_for(spec.id, t, spec.trajectories, s),
                       templ, mesh, std::move(cloud)});
  });
  return samples;
}

DatasetManifest build_dataset(const DatasetSpec& spec, const fs::path& root) {
  check_spec(spec);
  DatasetManifest manifest = plan_checked(spec);
  const fs::path base = root / to_string(spec.id);
  std::size_t index = 0;
  std::size_t last_object = SIZE_MAX;
  generate(spec, [&](std::size_t o, const std::shared_ptr<const Mesh>& templ, std::size_t t,
                     std::size_t s, const Mesh& mesh, PointCloud cloud) {
    const auto& entry = manifest.entries[index++];
    if (o != last_object) {
      fs::create_directories(base / spec.objects[o].id);
      write_mesh(base / entry.template_path, *templ);
      last_object = o;
    }
    if (s == 1) fs::create_directories(base / spec.objects[o].id / std::to_string(t));
    write_mesh(base / entry.mesh_path, mesh);
    write_xyz(base / entry.pointcloud_path, cloud);
  });
  save_manifest(base / "manifest.json", manifest);
  return manifest;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) entries.push_back(entry_to_json(e));
  json doc = {{"dataset_id", to_string(m.dataset_id)},
              {"seed", m.seed},
              {"sigma", m.sigma},
              {"trajectories", m.trajectories},
              {"steps", m.steps},
              {"points", m.points},
              {"objects", m.objects},
              {"entries", std::move(entries)}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(1) << '\n';
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const json doc = json::parse(in);
    m.dataset_id = parse_dataset_id(doc.at("dataset_id").get<std::string>());
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.sigma = doc.at("sigma").get<double>();
    m.trajectories = doc.at("trajectories").get<std::size_t>();
    m.steps = doc.at("steps").get<std::size_t>();
    m.points = doc.at("points").get<std::size_t>();
    m.objects = doc.at("objects").get<std::vector<std::string>>();
    for (const auto& e : doc.at("entries")) {
      m.entries.push_back({e.at("object_id").get<std::string>(),
                           e.at("trajectory_index").get<std::size_t>(),
                           e.at("step_index").get<std::size_t>(),
                           parse_split(e.at("split").get<std::string>()),
                           e.at("mesh_path").get<std::string>(),
                           e.at("pointcloud_path").get<std::string>(),
                           e.at("template_path").get<std::string>()});
    }
  } catch (const json::exception& ex) {
    throw CorruptFileError("malformed manifest " + path.string() + ": " + ex.what());
  }
  return m;
}

std::vector<Sample> load_samples(const fs::path& manifest_path, std::optional<Split> split) {
  const DatasetManifest m = load_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::map<std::string, std::shared_ptr<const Mesh>> templates;
  std::vector<Sample> samples;
  for (const auto& e : m.entries) {
    if (split && e.split != *split) continue;
    auto& templ = templates[e.template_path];
    if (!templ) templ = std::make_shared<const Mesh>(read_mesh(base / e.template_path));
    Mesh deformed = read_mesh(base / e.mesh_path);
    if (deformed.faces != templ->faces) {
      throw CorruptFileError(e.mesh_path + " does not share its template's face list");
    }
    samples.push_back({e.object_id, e.trajectory, e.step, e.split, templ, std::move(deformed),
                       read_xyz(base / e.pointcloud_path)});
  }
  return samples;
}

std::vector<ObjectSource> load_objects(const std::vector<fs::path>& paths) {
  std::vector<ObjectSource> objects;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw IoError("missing object file " + p.string());
    objects.push_back({p.stem().string(), read_mesh(p)});
  }
  return objects;
}

}  // namespace meshflow
