// meshflow command-line front end.
#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "meshflow/checkpoint.hpp"
#include "meshflow/config.hpp"
#include "meshflow/dataset.hpp"
#include "meshflow/error.hpp"
#include "meshflow/evaluation.hpp"
#include "meshflow/fixtures.hpp"
#include "meshflow/inference.hpp"
#include "meshflow/mesh_io.hpp"
#include "meshflow/selftest.hpp"
#include "meshflow/training.hpp"

namespace fs = std::filesystem;
using namespace meshflow;

namespace {

fs::path out_dir(const RunConfig& cfg) {
  const fs::path dir = cfg.get("out");
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_resolved(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "resolved_config.txt", cfg.to_text());
}

int cmd_gen_data(RunConfig cfg) {
  const DatasetId id = parse_dataset_id(cfg.get("dataset"));
  DatasetSpec spec = DatasetSpec::preset(id);
  if (cfg.has("trajectories")) spec.trajectories = cfg.get_size("trajectories");
  if (cfg.has("steps")) spec.steps = cfg.get_size("steps");
  // record the preset counts actually used
  cfg.set("trajectories", std::to_string(spec.trajectories));
  cfg.set("steps", std::to_string(spec.steps));
  spec.sigma = cfg.get_double("sigma");
  spec.points = cfg.get_size("points");
  spec.seed = cfg.get_u64("seed");
  std::vector<fs::path> files;
  for (const auto& f : cfg.get_list("object")) files.emplace_back(f);
  spec.objects = load_objects(files);
  const std::size_t subdiv = cfg.get_size("fixture_subdivisions");
  for (const auto& name : cfg.get_list("fixtures")) {
    spec.objects.push_back({name, fixtures::desk_object(name, subdiv)});
  }
  const fs::path dir = out_dir(cfg);
  const DatasetManifest m = build_dataset(spec, dir);
  write_resolved(cfg, dir);
  std::printf("dataset %s: %zu train / %zu test entries -> %s\n", to_string(id).c_str(),
              m.count(Split::train), m.count(Split::test),
              (dir / to_string(id) / "manifest.json").c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const TrainConfig tc = train_config_from(cfg);
  std::optional<Checkpoint> start;
  if (tc.stage == Stage::train_flow) {
    start = load_checkpoint(cfg.get("ae_ckpt"));
  }
  const fs::path dir = out_dir(cfg);
  TrainResult r = run_training(tc, std::move(start));
  r.checkpoint.config = cfg.values();
  save_checkpoint(dir / "ckpt.bin", r.checkpoint);
  write_metrics_csv(dir / "metrics.csv", r.metrics);
  write_resolved(cfg, dir);
  if (!r.metrics.empty()) {
    const auto& last = r.metrics.back();
    std::printf("%s epoch %zu %s = %.6g\n", to_string(tc.stage).c_str(), last.epoch,
                last.loss_name.c_str(), last.value);
  }
  std::printf("checkpoint: %s\n", (dir / "ckpt.bin").c_str());
  return 0;
}

int cmd_infer(const RunConfig& cfg) {
  const Checkpoint ckpt = load_checkpoint(cfg.get("ckpt"));
  const Mesh templ = read_mesh(cfg.get("template"));
  const PointCloud cloud = read_xyz(fs::path(cfg.get("cloud")));
  const fs::path out = cfg.get("out");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  Mesh result;
  if (parse_precision(cfg.get("precision")) == Precision::f32) {
    result = InferenceModel<float>(ckpt.model.encoder, ckpt.model.flow).deform(templ, cloud);
  } else {
    result = InferenceModel<double>(ckpt.model.encoder, ckpt.model.flow).deform(templ, cloud);
  }
  write_mesh(out, result);
  fs::path resolved = out;
  resolved.replace_extension(".resolved_config.txt");
  write_text(resolved, cfg.to_text());
  std::printf("wrote %s (%zu vertices, %zu faces)\n", out.c_str(), result.vertices.size(),
              result.faces.size());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const Checkpoint ckpt = load_checkpoint(cfg.get("ckpt"));
  EvalOptions opts;
  opts.jobs = cfg.get_size("jobs");
  opts.experiment_id = cfg.get_or("experiment_id", "");
  opts.train_set = cfg.get_or("train_set", "");
  opts.test_set = cfg.get_or("test_set", "");
  if (cfg.has("dump_meshes")) opts.dump_meshes = fs::path(cfg.get("dump_meshes"));
  const MetricsTable table =
      evaluate(ckpt, fs::path(cfg.get("manifest")), parse_split(cfg.get("split")), opts);
  const fs::path dir = out_dir(cfg);
  table.write_csv(dir / "metrics.csv");
  write_resolved(cfg, dir);
  for (const auto& r : table.rows) {
    if (r.entry.empty()) {
      std::printf("%-10s %-14s %.6g (n=%zu)\n", r.object_id.c_str(), r.metric.c_str(), r.value,
                  r.n_samples);
    }
  }
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  Checkpoint ckpt;
  if (cfg.has("ckpt")) {
    ckpt = load_checkpoint(cfg.get("ckpt"));
  } else {
    ckpt.model = Model::create(model_config_from(cfg), cfg.get_u64("seed"));
  }
  Mesh templ;
  if (cfg.has("template")) {
    templ = read_mesh(cfg.get("template"));
  } else {
    const std::size_t s = fixtures::subdivisions_for_vertex_count(cfg.get_size("vertices"));
    templ = normalize_unit_cube(fixtures::desk_object(cfg.get("fixture"), s)).mesh;
  }
  const PointCloud cloud = cfg.has("cloud")
                               ? read_xyz(fs::path(cfg.get("cloud")))
                               : sample_surface(templ, cfg.get_size("points"), cfg.get_u64("seed"));
  const BenchReport r = bench_inference(ckpt, templ, cloud, cfg.get_size("iters"),
                                        cfg.get_size("warmup"), parse_precision(cfg.get("precision")));
  const fs::path dir = out_dir(cfg);
  write_text(dir / "bench.json", r.to_json() + "\n");
  write_resolved(cfg, dir);
  std::printf("%zu vertices, %zu points, K=%zu, D=%zu, %s: mean %.2f ms, p50 %.2f ms, p95 %.2f ms, %.1f Hz\n",
              r.vertex_count, r.point_count, r.blocks, r.code_dim, to_string(r.precision).c_str(),
              r.mean_s * 1e3, r.p50_s * 1e3, r.p95_s * 1e3, r.throughput_hz);
  return 0;
}

int cmd_selftest(const RunConfig& cfg) {
  bool all = true;
  for (const auto& r : run_selftest(cfg.get_u64("seed"))) {
    std::printf("%s  %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all = all && r.passed;
  }
  std::printf("selftest %s\n", all ? "passed" : "FAILED");
  return all ? 0 : 2;
}

const std::map<std::string, std::string> kDescriptions = {
    {"gen-data", "generate a deformation dataset (A-D) and its manifest"},
    {"pretrain-ae", "pretrain the point-cloud autoencoder (L_CDR)"},
    {"train-flow", "train the conditional flow (L_CDD) from an autoencoder checkpoint"},
    {"infer", "deform a template mesh to fit a point cloud"},
    {"eval", "evaluate a checkpoint on a dataset split"},
    {"bench", "time end-to-end inference"},
    {"selftest", "run gradient checks, round trips and oracle comparisons"},
};

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (auto& c : out) c = c == '_' ? '-' : c;
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meshflow: template-mesh deformation with a conditional Real-NVP"};
  app.require_subcommand(1);

  struct Sub {
    CLI::App* app = nullptr;
    std::string config;
    std::map<std::string, std::string> values;
  };
  std::map<std::string, Sub> subs;
  for (const auto& name : subcommands()) {
    Sub& s = subs[name];
    s.app = app.add_subcommand(name, kDescriptions.at(name));
    s.app->add_option("--config", s.config, "flat key = value config file");
    for (const auto& key : config_keys(name)) {
      std::string names = "--" + flag_name(key.name);
      if (flag_name(key.name) != key.name) names += ",--" + key.name;
      std::string help = key.help;
      if (!key.default_value.empty()) help += " [" + key.default_value + "]";
      s.app->add_option(names, s.values[key.name], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (auto& [name, s] : subs) {
      if (!s.app->parsed()) continue;
      std::map<std::string, std::string> overrides;
      for (const auto& key : config_keys(name)) {
        if (s.app->count("--" + flag_name(key.name)) > 0) overrides[key.name] = s.values[key.name];
      }
      std::optional<fs::path> file;
      if (!s.config.empty()) file = s.config;
      const RunConfig cfg = resolve_config(name, file, overrides, std::getenv("MESHFLOW_SEED"));
      if (name == "gen-data") return cmd_gen_data(cfg);
      if (name == "pretrain-ae" || name == "train-flow") return cmd_train(cfg);
      if (name == "infer") return cmd_infer(cfg);
      if (name == "eval") return cmd_eval(cfg);
      if (name == "bench") return cmd_bench(cfg);
      if (name == "selftest") return cmd_selftest(cfg);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
