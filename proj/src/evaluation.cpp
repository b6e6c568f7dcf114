#include "meshflow/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <json.hpp>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "meshflow/error.hpp"
#include "meshflow/inference.hpp"
#include "meshflow/mesh_io.hpp"
#include "meshflow/nearest.hpp"

namespace meshflow {
namespace fs = std::filesystem;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

constexpr const char* kCsvHeader =
    "experiment_id,train_set,test_set,object_id,entry,metric,value,n_samples";

// Sample-weighted means of `rows`, grouped by everything except the entry,
// in order of first appearance.
std::vector<MetricsRow> weighted_groups(const std::vector<const MetricsRow*>& rows,
                                        bool collapse_objects) {
  std::vector<MetricsRow> out;
  std::vector<double> weighted;
  for (const MetricsRow* r : rows) {
    const std::string object = collapse_objects ? kAllObjects : r->object_id;
    auto it = std::find_if(out.begin(), out.end(), [&](const MetricsRow& o) {
      return o.experiment_id == r->experiment_id && o.train_set == r->train_set &&
             o.test_set == r->test_set && o.object_id == object && o.metric == r->metric;
    });
    if (it == out.end()) {
      out.push_back({r->experiment_id, r->train_set, r->test_set, object, "", r->metric, 0.0, 0});
      weighted.push_back(0.0);
      it = out.end() - 1;
    }
    const auto i = static_cast<std::size_t>(it - out.begin());
    weighted[i] += static_cast<double>(r->n_samples) * r->value;
    it->n_samples += r->n_samples;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].value = weighted[i] / static_cast<double>(out[i].n_samples);
  }
  return out;
}

}  // namespace

std::optional<MetricsRow> MetricsTable::find(const std::string& object_id,
                                             const std::string& metric) const {
  for (const auto& r : rows) {
    if (r.entry.empty() && r.object_id == object_id && r.metric == metric) return r;
  }
  return std::nullopt;
}

void MetricsTable::write_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    for (const std::string* f :
         {&r.experiment_id, &r.train_set, &r.test_set, &r.object_id, &r.entry, &r.metric}) {
      if (f->find_first_of(",\n") != std::string::npos) {
        throw ConfigError("metrics field contains a separator: " + *f);
      }
    }
    out << r.experiment_id << ',' << r.train_set << ',' << r.test_set << ',' << r.object_id << ','
        << r.entry << ',' << r.metric << ',' << fmt17(r.value) << ',' << r.n_samples << '\n';
  }
}

MetricsTable MetricsTable::read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ParseError("unexpected metrics header", 1);
  }
  MetricsTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw ParseError("expected 8 fields", line_no);
    try {
      table.rows.push_back({f[0], f[1], f[2], f[3], f[4], f[5], std::stod(f[6]),
                            static_cast<std::size_t>(std::stoull(f[7]))});
    } catch (const std::logic_error&) {
      throw ParseError("bad number", line_no);
    }
  }
  return table;
}

double per_vertex_l2(const Mesh& a, const Mesh& b) {
  if (a.vertices.size() != b.vertices.size() || a.vertices.empty()) {
    throw ShapeError("per-vertex L2 needs meshes with equal, nonzero vertex counts");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.vertices.size(); ++i) {
    total += std::sqrt(squared_distance(a.vertices[i], b.vertices[i]));
  }
  return total / static_cast<double>(a.vertices.size());
}

MetricsTable evaluate(const Checkpoint& ckpt, const std::vector<Sample>& samples, Split split,
                      const EvalOptions& options) {
  std::vector<const Sample*> chosen;
  for (const auto& s : samples) {
    if (s.split == split) chosen.push_back(&s);
  }
  if (chosen.empty()) throw ConfigError("no " + to_string(split) + " samples to evaluate");
  const InferenceModel<double> model(ckpt.model.encoder, ckpt.model.flow);

  struct Result {
    double cdd = 0.0;
    double l2 = 0.0;
    Mesh pred;
  };
  std::vector<Result> results(chosen.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < chosen.size(); i = next++) {
      try {
        const Sample& s = *chosen[i];
        Mesh pred = model.deform(*s.templ, s.cloud);
        results[i].cdd = chamfer_match(pred.vertices, s.deformed.vertices).value;
        results[i].l2 = per_vertex_l2(pred, s.deformed);
        if (options.dump_meshes) results[i].pred = std::move(pred);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = chosen.size();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, chosen.size());
  std::vector<std::thread> threads;
  for (std::size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  MetricsTable table;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const Sample& s = *chosen[i];
    const std::string entry = std::to_string(s.trajectory) + "/" + std::to_string(s.step);
    for (auto [metric, value] : {std::pair{"L_CDD", results[i].cdd},
                                 std::pair{"per_vertex_L2", results[i].l2}}) {
      table.rows.push_back({options.experiment_id, options.train_set, options.test_set,
                            s.object_id, entry, metric, value, 1});
    }
    if (options.dump_meshes) {
      const fs::path dir = *options.dump_meshes / s.object_id / std::to_string(s.trajectory);
      fs::create_directories(dir);
      write_mesh(dir / (std::to_string(s.step) + ".obj"), results[i].pred);
    }
  }
  const MetricsTable objects = per_object_breakdown(table);
  std::vector<const MetricsRow*> object_rows;
  for (const auto& r : objects.rows) object_rows.push_back(&r);
  const auto aggregate = weighted_groups(object_rows, true);
  table.rows.insert(table.rows.end(), objects.rows.begin(), objects.rows.end());
  table.rows.insert(table.rows.end(), aggregate.begin(), aggregate.end());
  return table;
}

MetricsTable evaluate(const Checkpoint& ckpt, const fs::path& manifest, Split split,
                      const EvalOptions& options) {
  return evaluate(ckpt, load_samples(manifest, split), split, options);
}

MetricsTable per_object_breakdown(const MetricsTable& table) {
  std::vector<const MetricsRow*> entries;
  std::vector<const MetricsRow*> objects;
  for (const auto& r : table.rows) {
    if (!r.entry.empty()) {
      entries.push_back(&r);
    } else if (r.object_id != kAllObjects) {
      objects.push_back(&r);
    }
  }
  return {weighted_groups(entries.empty() ? objects : entries, false)};
}

AdaptiveResult adaptive_resolution_eval(const Checkpoint& ckpt, const Mesh& low_res_template,
                                        const Mesh& high_res_template, const PointCloud& cloud,
                                        const Mesh* low_res_truth, const Mesh* high_res_truth) {
  const InferenceModel<double> model(ckpt.model.encoder, ckpt.model.flow);
  const Encoding enc = model.encode(cloud);
  AdaptiveResult r;
  r.low = model.deform(low_res_template, enc);
  r.high = model.deform(high_res_template, enc);

  auto cdd = [&](const Mesh& pred, const Mesh* truth) {
    return truth ? chamfer_match(pred.vertices, truth->vertices).value
                 : chamfer_match(pred.vertices, cloud.points).value;
  };
  r.table.rows.push_back({"adaptive", "", "", "", "low_res", "L_CDD", cdd(r.low, low_res_truth),
                          low_res_template.vertices.size()});
  r.table.rows.push_back({"adaptive", "", "", "", "high_res", "L_CDD",
                          cdd(r.high, high_res_truth), high_res_template.vertices.size()});

  struct BitsHash {
    std::size_t operator()(const std::array<std::uint64_t, 3>& k) const {
      return std::hash<std::uint64_t>{}(k[0] * 0x9e3779b97f4a7c15ULL ^ k[1] * 0xc2b2ae3d27d4eb4fULL ^
                                        k[2]);
    }
  };
  auto bits = [](const Vec3& v) {
    return std::array<std::uint64_t, 3>{std::bit_cast<std::uint64_t>(v[0]),
                                        std::bit_cast<std::uint64_t>(v[1]),
                                        std::bit_cast<std::uint64_t>(v[2])};
  };
  std::unordered_map<std::array<std::uint64_t, 3>, std::size_t, BitsHash> low_index;
  for (std::size_t i = 0; i < low_res_template.vertices.size(); ++i) {
    low_index.emplace(bits(low_res_template.vertices[i]), i);
  }
  for (std::size_t i = 0; i < high_res_template.vertices.size(); ++i) {
    const auto it = low_index.find(bits(high_res_template.vertices[i]));
    if (it == low_index.end()) continue;
    ++r.coincident;
    if (bits(r.high.vertices[i]) != bits(r.low.vertices[it->second])) ++r.mismatched;
  }
  return r;
}

std::string to_string(Precision p) { return p == Precision::f32 ? "float32" : "float64"; }

Precision parse_precision(std::string_view text) {
  if (text == "float32" || text == "f32") return Precision::f32;
  if (text == "float64" || text == "f64") return Precision::f64;
  throw ConfigError("invalid precision '" + std::string(text) + "' (expected float32 or float64)");
}

std::string BenchReport::to_json() const {
  const nlohmann::ordered_json j = {
      {"vertex_count", vertex_count},
      {"point_count", point_count},
      {"K", blocks},
      {"D", code_dim},
      {"precision", to_string(precision)},
      {"warmup_iters", warmup_iters},
      {"timed_iters", timed_iters},
      {"threads", threads},
      {"mean_latency_s", mean_s},
      {"p50_latency_s", p50_s},
      {"p95_latency_s", p95_s},
      {"throughput_hz", throughput_hz},
      {"hardware", hardware},
  };
  return j.dump(2);
}

std::string hardware_descriptor() {
  std::string model = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " logical cpus";
}

namespace {

template <typename T>
BenchReport run_bench(const Checkpoint& ckpt, const Mesh& templ, const PointCloud& cloud,
                      std::size_t iters, std::size_t warmup) {
  const InferenceModel<T> model(ckpt.model.encoder, ckpt.model.flow);
  std::vector<T> points(cloud.size() * 3);
  std::vector<T> verts(templ.vertices.size() * 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) points[3 * i + k] = static_cast<T>(cloud.points[i][k]);
  }
  for (std::size_t i = 0; i < templ.vertices.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) verts[3 * i + k] = static_cast<T>(templ.vertices[i][k]);
  }
  std::vector<T> out(verts.size());
  for (std::size_t i = 0; i < warmup; ++i) {
    model.run(points.data(), cloud.size(), verts.data(), out.data(), templ.vertices.size());
  }
  BenchReport r;
  r.samples_s.reserve(iters);
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    model.run(points.data(), cloud.size(), verts.data(), out.data(), templ.vertices.size());
    const auto t1 = std::chrono::steady_clock::now();
    r.samples_s.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return r;
}

double nearest_rank(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::ceil(q * n));
  return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

}  // namespace

BenchReport bench_inference(const Checkpoint& ckpt, const Mesh& templ, const PointCloud& cloud,
                            std::size_t iters, std::size_t warmup, Precision precision) {
  if (iters < kMinTimedIters) {
    throw ConfigError("bench needs at least " + std::to_string(kMinTimedIters) + " timed iterations");
  }
  validate_mesh(templ);
  validate_cloud(cloud);
  BenchReport r = precision == Precision::f32 ? run_bench<float>(ckpt, templ, cloud, iters, warmup)
                                              : run_bench<double>(ckpt, templ, cloud, iters, warmup);
  r.vertex_count = templ.vertices.size();
  r.point_count = cloud.size();
  r.blocks = ckpt.model.config.blocks();
  r.code_dim = ckpt.model.config.code_dim();
  r.precision = precision;
  r.warmup_iters = warmup;
  r.timed_iters = iters;
  r.threads = 1;
  double total = 0.0;
  for (double s : r.samples_s) total += s;
  r.mean_s = total / static_cast<double>(iters);
  auto sorted = r.samples_s;
  std::sort(sorted.begin(), sorted.end());
  r.p50_s = nearest_rank(sorted, 0.50);
  r.p95_s = nearest_rank(sorted, 0.95);
  r.throughput_hz = 1.0 / r.mean_s;
  r.hardware = hardware_descriptor();
  return r;
}

}  // namespace meshflow
