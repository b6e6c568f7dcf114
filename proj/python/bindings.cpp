#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
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
#include "meshflow/nearest.hpp"
#include "meshflow/selftest.hpp"
#include "meshflow/training.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace meshflow;

namespace {

using Coords = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Faces = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Coords& a, const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 3) {
    throw ShapeError(std::string(what) + " must have shape (n, 3)");
  }
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  if (!out.empty()) std::memcpy(out.data(), a.data(), out.size() * sizeof(Vec3));
  return out;
}

Mesh to_mesh(const Coords& vertices, const Faces& faces) {
  Mesh m;
  m.vertices = to_points(vertices, "vertices");
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw ShapeError("faces must have shape (m, 3)");
  m.faces.resize(static_cast<std::size_t>(faces.shape(0)));
  if (!m.faces.empty()) std::memcpy(m.faces.data(), faces.data(), m.faces.size() * sizeof(Face));
  return m;
}

py::array_t<double> from_points(const std::vector<Vec3>& pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  if (!pts.empty()) std::memcpy(out.mutable_data(), pts.data(), pts.size() * sizeof(Vec3));
  return out;
}

py::tuple from_mesh(const Mesh& m) {
  py::array_t<std::uint32_t> faces({static_cast<py::ssize_t>(m.faces.size()), py::ssize_t{3}});
  if (!m.faces.empty()) std::memcpy(faces.mutable_data(), m.faces.data(), m.faces.size() * sizeof(Face));
  return py::make_tuple(from_points(m.vertices), faces);
}

// Config values may be given as Python scalars or lists; the resolver wants text.
std::string config_text(const py::handle& v) {
  if (py::isinstance<py::bool_>(v)) return v.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
    std::string s;
    for (const auto& item : v) {
      if (!s.empty()) s += ",";
      s += config_text(item);
    }
    return s;
  }
  return py::str(v).cast<std::string>();
}

RunConfig resolve(const std::string& subcommand, const py::dict& options) {
  std::map<std::string, std::string> overrides;
  for (const auto& [k, v] : options) overrides[k.cast<std::string>()] = config_text(v);
  return resolve_config(subcommand, std::nullopt, overrides);
}

py::dict metrics_row(const MetricsRow& r) {
  py::dict d;
  d["experiment_id"] = r.experiment_id;
  d["train_set"] = r.train_set;
  d["test_set"] = r.test_set;
  d["object_id"] = r.object_id;
  d["entry"] = r.entry;
  d["metric"] = r.metric;
  d["value"] = r.value;
  d["n_samples"] = r.n_samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "meshflow core bindings";

  // Translators run newest first, so the base class is registered before its subclasses.
  const auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<CorruptFileError>(m, "CorruptFileError", base.ptr());

  py::class_<Model>(m, "Model")
      .def_property_readonly("code_dim", [](const Model& md) { return md.config.code_dim(); })
      .def_property_readonly("blocks", [](const Model& md) { return md.config.blocks(); })
      .def_property_readonly("parameter_count", [](Model& md) {
        std::size_t n = 0;
        for (const Parameter* p : md.parameters()) n += p->value.size();
        return n;
      });

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("stage", &Checkpoint::stage)
      .def_readonly("model", &Checkpoint::model)
      .def_readonly("config", &Checkpoint::config)
      .def("save", [](const Checkpoint& c, const fs::path& path) { save_checkpoint(path, c); })
      .def(
          "encode",
          [](const Checkpoint& c, const Coords& cloud) {
            const InferenceModel<double> im(c.model.encoder, c.model.flow);
            return im.encode(PointCloud{to_points(cloud, "cloud")});
          },
          py::arg("cloud"))
      .def(
          "deform",
          [](const Checkpoint& c, const Coords& vertices, const Faces& faces, const Coords& cloud,
             const std::string& precision) {
            const Mesh templ = to_mesh(vertices, faces);
            const PointCloud pc{to_points(cloud, "cloud")};
            const Precision p = parse_precision(precision);
            Mesh out;
            {
              py::gil_scoped_release release;
              out = p == Precision::f32
                        ? InferenceModel<float>(c.model.encoder, c.model.flow).deform(templ, pc)
                        : InferenceModel<double>(c.model.encoder, c.model.flow).deform(templ, pc);
            }
            return from_points(out.vertices);
          },
          py::arg("vertices"), py::arg("faces"), py::arg("cloud"), py::arg("precision") = "float64",
          "Deformed template vertices; the face list is unchanged.");

  m.def("load_checkpoint", [](const fs::path& path) { return load_checkpoint(path); },
        py::arg("path"));

  m.def(
      "chamfer",
      [](const Coords& a, const Coords& b) {
        const auto pa = to_points(a, "a");
        const auto pb = to_points(b, "b");
        return chamfer_match(pa, pb).value;
      },
      py::arg("a"), py::arg("b"), "Symmetric chamfer distance (mean squared nearest distance).");

  m.def("desk_object_names", &fixtures::desk_object_names);
  m.def(
      "desk_object",
      [](const std::string& name, std::size_t subdivisions) {
        return from_mesh(fixtures::desk_object(name, subdivisions));
      },
      py::arg("name"), py::arg("subdivisions") = 10);
  m.def(
      "sample_surface",
      [](const Coords& vertices, const Faces& faces, std::size_t n, std::uint64_t seed) {
        return from_points(sample_surface(to_mesh(vertices, faces), n, seed).points);
      },
      py::arg("vertices"), py::arg("faces"), py::arg("n"), py::arg("seed") = 0);

  m.def("read_mesh", [](const fs::path& path) { return from_mesh(read_mesh(path)); },
        py::arg("path"));
  m.def(
      "write_mesh",
      [](const fs::path& path, const Coords& vertices, const Faces& faces) {
        write_mesh(path, to_mesh(vertices, faces));
      },
      py::arg("path"), py::arg("vertices"), py::arg("faces"));

  m.def(
      "plan_dataset",
      [](const std::string& id, std::size_t objects) {
        DatasetSpec spec = DatasetSpec::preset(parse_dataset_id(id));
        spec.objects.resize(objects);
        for (std::size_t i = 0; i < objects; ++i) spec.objects[i].id = "object" + std::to_string(i);
        const DatasetManifest man = plan_dataset(spec);
        return py::make_tuple(man.count(Split::train), man.count(Split::test));
      },
      py::arg("dataset"), py::arg("objects") = 1,
      "(train, test) entry counts of a dataset preset.");

  m.def(
      "generate_dataset",
      [](const fs::path& out, const py::kwargs& options) {
        py::dict opts(options);
        opts["out"] = out.string();
        RunConfig cfg = resolve("gen-data", opts);
        const DatasetId id = parse_dataset_id(cfg.get("dataset"));
        DatasetSpec spec = DatasetSpec::preset(id);
        if (cfg.has("trajectories")) spec.trajectories = cfg.get_size("trajectories");
        if (cfg.has("steps")) spec.steps = cfg.get_size("steps");
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
        build_dataset(spec, out);
        return out / to_string(id) / "manifest.json";
      },
      py::arg("out"),
      "Generates a dataset under `out`; keyword options are the gen-data config keys. "
      "Returns the manifest path.");

  m.def(
      "train",
      [](const fs::path& manifest, const std::string& stage, std::optional<Checkpoint> start,
         const py::kwargs& options) {
        py::dict opts(options);
        opts["manifest"] = manifest.string();
        const std::string sub = stage == "pretrain_ae" ? "pretrain-ae" : "train-flow";
        if (sub == "train-flow") opts["stage"] = stage;
        const RunConfig cfg = resolve(sub, opts);
        const TrainConfig tc = train_config_from(cfg);
        if (tc.stage == Stage::train_flow && !start) start = load_checkpoint(cfg.get("ae_ckpt"));
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = run_training(tc, std::move(start));
        }
        r.checkpoint.config = cfg.values();
        py::list metrics;
        for (const auto& row : r.metrics) {
          py::dict d;
          d["epoch"] = row.epoch;
          d["split"] = row.split;
          d["loss"] = row.loss_name;
          d["value"] = row.value;
          metrics.append(d);
        }
        return py::make_tuple(std::move(r.checkpoint), metrics);
      },
      py::arg("manifest"), py::arg("stage") = "pretrain_ae", py::arg("start") = py::none(),
      "Runs a training stage (pretrain_ae, train_flow or end_to_end); keyword options are the "
      "training config keys. Returns (checkpoint, metrics).");

  m.def(
      "evaluate",
      [](const Checkpoint& ckpt, const fs::path& manifest, const std::string& split,
         std::size_t jobs) {
        EvalOptions opt;
        opt.jobs = jobs;
        MetricsTable t;
        {
          py::gil_scoped_release release;
          t = evaluate(ckpt, manifest, parse_split(split), opt);
        }
        py::list rows;
        for (const auto& r : t.rows) rows.append(metrics_row(r));
        return rows;
      },
      py::arg("checkpoint"), py::arg("manifest"), py::arg("split") = "test", py::arg("jobs") = 1);

  m.def(
      "bench",
      [](const Checkpoint& ckpt, const Coords& vertices, const Faces& faces, const Coords& cloud,
         std::size_t iters, std::size_t warmup, const std::string& precision) {
        const Mesh templ = to_mesh(vertices, faces);
        const PointCloud pc{to_points(cloud, "cloud")};
        BenchReport r;
        {
          py::gil_scoped_release release;
          r = bench_inference(ckpt, templ, pc, iters, warmup, parse_precision(precision));
        }
        py::dict d;
        d["vertex_count"] = r.vertex_count;
        d["point_count"] = r.point_count;
        d["precision"] = to_string(r.precision);
        d["timed_iters"] = r.timed_iters;
        d["threads"] = r.threads;
        d["mean_s"] = r.mean_s;
        d["p50_s"] = r.p50_s;
        d["p95_s"] = r.p95_s;
        d["throughput_hz"] = r.throughput_hz;
        d["hardware"] = r.hardware;
        return d;
      },
      py::arg("checkpoint"), py::arg("vertices"), py::arg("faces"), py::arg("cloud"),
      py::arg("iters") = 50, py::arg("warmup") = 5, py::arg("precision") = "float32");

  m.def(
      "selftest",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : run_selftest(seed)) out.append(py::make_tuple(r.name, r.passed, r.detail));
        return out;
      },
      py::arg("seed") = 0);
}
