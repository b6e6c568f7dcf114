#include "meshflow/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "meshflow/checkpoint.hpp"
#include "meshflow/error.hpp"
#include "meshflow/fixtures.hpp"
#include "meshflow/gradcheck.hpp"
#include "meshflow/mesh_io.hpp"
#include "meshflow/nearest.hpp"
#include "meshflow/warp.hpp"

namespace meshflow {
namespace {

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(r, c);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({u(rng), u(rng), u(rng)});
  return c;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.encoder = {{8, 16}, 16};
  c.decoder = {{16}, 16};
  c.flow.blocks = 3;
  c.flow.proj_dim = 8;
  c.flow.hidden = 8;
  return c;
}

void randomize_outputs(FlowModel& flow, std::mt19937_64& rng) {
  for (auto& b : flow.blocks()) {
    for (ConditionerMap* m : {&b.map_s, &b.map_t}) {
      m->out.weight.value = random_tensor(m->out.weight.value.rows(), 1, rng, 0.5);
      m->out.bias.value = random_tensor(1, 1, rng, 0.5);
    }
  }
}

SelftestResult check(const std::string& name, const std::function<std::string(bool&)>& body) {
  SelftestResult r{name, false, {}};
  try {
    r.detail = body(r.passed);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

std::string num(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

std::vector<SelftestResult> run_selftest(std::uint64_t seed) {
  std::vector<SelftestResult> out;
  std::mt19937_64 rng(seed);

  out.push_back(check("gradcheck pointwise_linear", [&](bool& ok) {
    const auto res = grad_check(
        [](Tape&, std::span<const Var> in) { return sum(pointwise_linear(in[0], in[1], in[2])); },
        {random_tensor(4, 3, rng), random_tensor(3, 5, rng), random_tensor(1, 5, rng)});
    ok = res.max_rel_error < 1e-8;
    return "max rel error " + num(res.max_rel_error);
  }));

  out.push_back(check("gradcheck coupling block", [&](bool& ok) {
    std::mt19937_64 init(seed + 1);
    FlowConfig fc;
    fc.blocks = 1;
    fc.proj_dim = 6;
    fc.hidden = 5;
    FlowModel flow(fc, 4, init);
    randomize_outputs(flow, init);
    const Tensor w = random_tensor(6, 3, rng);
    const auto res = grad_check(
        [&](Tape& t, std::span<const Var> in) {
          return weighted_sum(flow.block_forward(t, 0, in[0], in[1]), w);
        },
        [&](std::size_t) {
          return std::vector<Tensor>{random_tensor(6, 3, rng, 0.5), random_tensor(1, 4, rng)};
        });
    ok = res.max_rel_error < 1e-5;
    return "max rel error " + num(res.max_rel_error);
  }));

  out.push_back(check("chamfer kd-tree vs brute force", [&](bool& ok) {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
      const auto a = random_cloud(50 + 17 * i, rng);
      const auto b = random_cloud(80 + 5 * i, rng);
      worst = std::max(worst, std::abs(chamfer_match(a.points, b.points).value -
                                       chamfer_bruteforce(a, b)));
    }
    ok = worst < 1e-12;
    return "max |diff| " + num(worst);
  }));

  out.push_back(check("encoder permutation invariance", [&](bool& ok) {
    Model m = Model::create(toy_config(), seed);
    auto cloud = random_cloud(64, rng);
    const Encoding a = encode(cloud, m.encoder);
    std::shuffle(cloud.points.begin(), cloud.points.end(), rng);
    ok = a == encode(cloud, m.encoder);
    return ok ? "exact" : "encodings differ";
  }));

  out.push_back(check("flow round trip", [&](bool& ok) {
    Model m = Model::create(toy_config(), seed);
    randomize_outputs(m.flow, rng);
    const Tensor x = random_tensor(200, 3, rng, 0.5);
    Encoding enc(16);
    for (auto& v : enc) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const Tensor back = flow_inverse(flow_deform(x, enc, m.flow), enc, m.flow);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
    ok = worst < 1e-9;
    return "max error " + num(worst);
  }));

  out.push_back(check("mesh OBJ/OFF round trip", [&](bool& ok) {
    const Mesh m = fixtures::desk_object("dice", 3);
    std::stringstream obj, off;
    write_obj(obj, m);
    write_off(off, m);
    const Mesh a = read_obj(obj);
    const Mesh b = read_off(off);
    double worst = 0.0;
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      worst = std::max({worst, squared_distance(a.vertices[i], m.vertices[i]),
                        squared_distance(b.vertices[i], m.vertices[i])});
    }
    ok = a.faces == m.faces && b.faces == m.faces && std::sqrt(worst) < 1e-8;
    return "max error " + num(std::sqrt(worst));
  }));

  out.push_back(check("warp field exact at lattice nodes", [&](bool& ok) {
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      worst = std::max(worst, sample_warp_field(seed + s, 0.05).max_node_residual());
    }
    ok = worst < 1e-9;
    return "max residual " + num(worst);
  }));

  out.push_back(check("checkpoint byte round trip", [&](bool& ok) {
    Checkpoint c;
    c.model = Model::create(toy_config(), seed);
    const std::string bytes = serialize_checkpoint(c);
    ok = serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes;
    return std::to_string(bytes.size()) + " bytes";
  }));

  return out;
}

}  // namespace meshflow
