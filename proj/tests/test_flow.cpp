#include <doctest.h>

#include <cstring>

#include "meshflow/error.hpp"
#include "meshflow/fixtures.hpp"
#include "meshflow/gradcheck.hpp"
#include "meshflow/inference.hpp"
#include "support.hpp"

using namespace meshflow;
using namespace testing;

namespace {

FlowModel random_flow(std::size_t blocks, std::size_t d, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  FlowConfig cfg;
  cfg.blocks = blocks;
  cfg.proj_dim = 8;
  cfg.hidden = 12;
  FlowModel f(cfg, d, rng);
  randomize_flow_outputs(f, rng, scale);
  return f;
}

// Coupling written directly from its definition: zero the masked coordinate,
// project, concatenate the code, two-layer maps, then z * exp(s) + t.
std::array<double, 3> coupling_oracle(const std::array<double, 3>& c, const Encoding& enc,
                                      const CouplingBlock& b) {
  std::array<double, 3> xm = c;
  xm[b.masked_dim] = 0.0;
  const Tensor& pw = b.proj.weight.value;
  const std::size_t P = pw.cols();
  std::vector<double> feat(P);
  for (std::size_t j = 0; j < P; ++j) {
    feat[j] = b.proj.bias.value[j];
    for (std::size_t i = 0; i < 3; ++i) feat[j] += xm[i] * pw(i, j);
  }
  std::vector<double> z(feat);
  z.insert(z.end(), enc.begin(), enc.end());
  auto map = [&](const ConditionerMap& m, bool nonlinear) {
    const std::size_t H = m.bias.value.cols();
    double out = m.out.bias.value[0];
    for (std::size_t h = 0; h < H; ++h) {
      double a = m.bias.value[h];
      for (std::size_t j = 0; j < z.size(); ++j) {
        const double w = j < P ? m.w_feat.value(j, h) : m.w_enc.value(j - P, h);
        a += z[j] * w;
      }
      if (nonlinear) a = std::max(0.0, a);
      out += a * m.out.weight.value(h, 0);
    }
    return out;
  };
  const double s = 2.0 * std::tanh(map(b.map_s, true));
  const double t = map(b.map_t, false);
  std::array<double, 3> r = c;
  r[b.masked_dim] = c[b.masked_dim] * std::exp(s) + t;
  return r;
}

bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST_SUITE("flow") {
  TEST_CASE("default masks cycle through the three coordinates") {
    CHECK(default_masked_dims(6) == std::vector<std::size_t>{0, 1, 2, 0, 1, 2});
    std::mt19937_64 rng(0);
    FlowModel f(FlowConfig{}, 1024, rng);
    CHECK(f.size() == 6);
    for (std::size_t k = 0; k < 6; ++k) CHECK(f.blocks()[k].masked_dim == k % 3);
    FlowConfig bad;
    bad.masked_dims = {0, 3, 1, 0, 1, 2};
    CHECK_THROWS_AS(FlowModel(bad, 8, rng), ConfigError);
    FlowConfig none;
    none.blocks = 0;
    CHECK_THROWS_AS(FlowModel(none, 8, rng), ConfigError);
  }

  TEST_CASE("freshly initialized flow is the identity") {
    std::mt19937_64 rng(1);
    FlowModel f(FlowConfig{3, 8, 12, {}, 30.0}, 16, rng);
    const Tensor x = random_tensor(50, 3, rng);
    const Encoding e = random_encoding(16, rng);
    CHECK(flow_deform(x, e, f) == x);
    CHECK(flow_inverse(x, e, f) == x);
    Tape t;
    CHECK(f.forward(t, t.constant(x), t.constant(Tensor::row_vector(e))).value() == x);
  }

  TEST_CASE("hand trace: s = ln 2, t = 0.5, z = 1 gives 2.5, inverse gives 1") {
    std::mt19937_64 rng(2);
    FlowConfig cfg{1, 4, 3, {2}, 30.0};
    FlowModel f(cfg, 2, rng);
    CouplingBlock& b = f.blocks()[0];
    for (ConditionerMap* m : {&b.map_s, &b.map_t}) {
      m->w_feat.value.fill(0.0);
      m->w_enc.value.fill(0.0);
      m->bias.value.fill(0.0);
      m->out.weight.value.fill(0.0);
    }
    b.map_s.out.bias.value[0] = std::atanh(std::log(2.0) / 2.0);
    b.map_t.out.bias.value[0] = 0.5;
    const Tensor x(1, 3, {0.3, -0.4, 1.0});
    const Encoding e{0.7, -0.1};
    const Tensor y = coupling_forward(x, e, b);
    CHECK(y(0, 0) == 0.3);
    CHECK(y(0, 1) == -0.4);
    CHECK(y(0, 2) == doctest::Approx(2.5).epsilon(1e-15));
    const Tensor back = coupling_inverse(y, e, b);
    CHECK(back(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
    Tape t;
    CHECK(f.forward(t, t.constant(x), t.constant(Tensor::row_vector(e))).value()(0, 2) ==
          doctest::Approx(2.5).epsilon(1e-15));
  }

  TEST_CASE("coupling matches a direct evaluation of its definition") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      FlowModel f = random_flow(3, 6, 100 + trial);
      const Encoding e = random_encoding(6, rng);
      const Tensor x = random_tensor(20, 3, rng);
      for (const auto& b : f.blocks()) {
        const Tensor y = coupling_forward(x, e, b);
        for (std::size_t i = 0; i < 20; ++i) {
          const auto want = coupling_oracle({x(i, 0), x(i, 1), x(i, 2)}, e, b);
          for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(y(i, k) - want[k]) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("changing the code changes only the masked coordinate") {
    std::mt19937_64 rng(4);
    FlowModel f = random_flow(3, 6, 7);
    const Tensor x = random_tensor(30, 3, rng);
    const Encoding e1 = random_encoding(6, rng), e2 = random_encoding(6, rng);
    for (const auto& b : f.blocks()) {
      const Tensor a = coupling_forward(x, e1, b), c = coupling_forward(x, e2, b);
      std::size_t moved = 0;
      for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
          if (k == b.masked_dim) {
            moved += a(i, k) != c(i, k);
          } else {
            CHECK(bit_equal(a(i, k), x(i, k)));
            CHECK(bit_equal(c(i, k), x(i, k)));
          }
        }
      }
      CHECK(moved == 30);
    }
  }

  TEST_CASE("block round trip below 1e-9 over 10^4 coordinate and code draws") {
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int draw = 0; draw < 10; ++draw) {
      FlowModel f = random_flow(3, 6, 200 + draw, 1.0);
      const Tensor x = random_tensor(1000, 3, rng, -2.0, 2.0);
      const Encoding e = random_encoding(6, rng);
      for (const auto& b : f.blocks()) {
        worst = std::max(worst, max_abs_diff(coupling_inverse(coupling_forward(x, e, b), e, b), x));
      }
      worst = std::max(worst, max_abs_diff(flow_inverse(flow_deform(x, e, f), e, f), x));
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("identity block inverts to the identity") {
    std::mt19937_64 rng(6);
    FlowModel f(FlowConfig{1, 4, 4, {}, 30.0}, 3, rng);
    const Tensor x = random_tensor(10, 3, rng);
    CHECK(coupling_inverse(x, random_encoding(3, rng), f.blocks()[0]) == x);
  }

  TEST_CASE("K = 6 full chain recovers the template within 1e-8") {
    std::mt19937_64 rng(7);
    FlowModel f = random_flow(6, 16, 9, 1.0);
    const Mesh templ = fixtures::desk_object("hammer", 6);
    const Tensor x = mesh_vertices_tensor(templ);
    const Encoding e = random_encoding(16, rng);
    CHECK(max_abs_diff(flow_inverse(flow_deform(x, e, f), e, f), x) < 1e-8);
  }

  TEST_CASE("deforming a subset equals the subset of deforming all vertices") {
    std::mt19937_64 rng(8);
    FlowModel f = random_flow(6, 16, 10);
    const Tensor x = random_tensor(300, 3, rng);
    const Encoding e = random_encoding(16, rng);
    const Tensor all = flow_deform(x, e, f);
    std::vector<std::size_t> pick;
    for (std::size_t i = 0; i < 300; i += 7) pick.push_back(i);
    Tensor sub(pick.size(), 3);
    for (std::size_t r = 0; r < pick.size(); ++r) {
      for (std::size_t k = 0; k < 3; ++k) sub(r, k) = x(pick[r], k);
    }
    const Tensor part = flow_deform(sub, e, f);
    for (std::size_t r = 0; r < pick.size(); ++r) {
      for (std::size_t k = 0; k < 3; ++k) CHECK(bit_equal(part(r, k), all(pick[r], k)));
    }
    // Same property for the tape path.
    Tape t;
    const Var code = t.constant(Tensor::row_vector(e));
    const Tensor tall = f.forward(t, t.constant(x), code).value();
    const Tensor tpart = f.forward(t, t.constant(sub), code).value();
    for (std::size_t r = 0; r < pick.size(); ++r) {
      for (std::size_t k = 0; k < 3; ++k) CHECK(bit_equal(tpart(r, k), tall(pick[r], k)));
    }
  }

  TEST_CASE("the same model accepts 3000 and 27000 vertex templates") {
    std::mt19937_64 rng(9);
    FlowModel f = random_flow(6, 16, 11);
    const Encoding e = random_encoding(16, rng);
    for (std::size_t v : {3000ul, 27000ul}) {
      const Tensor x = random_tensor(v, 3, rng);
      CHECK(flow_deform(x, e, f).rows() == v);
      const Mesh templ = fixtures::desk_object("scissors", fixtures::subdivisions_for_vertex_count(v));
      const Mesh out = deform_mesh(templ, e, f);
      CHECK(out.vertices.size() == templ.vertices.size());
      CHECK(out.faces == templ.faces);
      CHECK(topology_summary(out) == topology_summary(templ));
    }
  }

  TEST_CASE("identity model leaves the mesh unchanged") {
    std::mt19937_64 rng(10);
    FlowModel f(FlowConfig{6, 8, 8, {}, 30.0}, 4, rng);
    const Mesh templ = fixtures::desk_object("dice", 4);
    const Mesh out = deform_mesh(templ, random_encoding(4, rng), f);
    CHECK(out.vertices == templ.vertices);
    CHECK(out.faces == templ.faces);
  }

  TEST_CASE("fused and reference tape routes agree, engines agree with the tape") {
    std::mt19937_64 rng(11);
    FlowModel f = random_flow(6, 16, 12);
    const Tensor x = random_tensor(200, 3, rng);
    const Encoding e = random_encoding(16, rng);
    Tape t;
    const Var code = t.constant(Tensor::row_vector(e));
    const Tensor fused = f.forward(t, t.constant(x), code, CouplingRoute::fused).value();
    const Tensor ref = f.forward(t, t.constant(x), code, CouplingRoute::reference).value();
    CHECK(max_abs_diff(fused, ref) < 1e-12);
    CHECK(max_abs_diff(flow_deform(x, e, f), ref) < 1e-12);
    std::vector<float> xf(x.values().begin(), x.values().end());
    FlowEngine<float>(f).condition(e).forward(xf.data(), 200);
    double worst = 0.0;
    for (std::size_t i = 0; i < xf.size(); ++i) worst = std::max(worst, std::abs(xf[i] - ref[i]));
    CHECK(worst < 1e-4);
  }

  TEST_CASE("log-scale beyond the guard raises a numeric error naming the block") {
    std::mt19937_64 rng(12);
    FlowConfig cfg{3, 4, 4, {}, 1.0};
    FlowModel f(cfg, 2, rng);
    auto& b = f.blocks()[1];
    b.map_s.out.weight.value.fill(0.0);
    b.map_s.out.bias.value[0] = 3.0;  // s = 2 tanh(3) > 1
    const Tensor x = random_tensor(4, 3, rng);
    const Encoding e{0.1, 0.2};
    try {
      flow_deform(x, e, f);
      FAIL("expected NumericError");
    } catch (const NumericError& err) {
      CHECK(std::string(err.what()).find("block 1") != std::string::npos);
    }
    Tape t;
    try {
      f.forward(t, t.constant(x), t.constant(Tensor::row_vector(e)));
      FAIL("expected NumericError");
    } catch (const NumericError& err) {
      CHECK(std::string(err.what()).find("block 1") != std::string::npos);
    }
    CHECK_THROWS_AS(coupling_forward(x, e, b, 1.0), NumericError);
  }

  TEST_CASE("code size mismatch is a config error") {
    FlowModel f = random_flow(3, 6, 13);
    const Tensor x(2, 3);
    CHECK_THROWS_AS(flow_deform(x, Encoding(5, 0.0), f), ConfigError);
    Tape t;
    CHECK_THROWS_AS(f.forward(t, t.constant(x), t.constant(Tensor(1, 7))), ConfigError);
  }

  TEST_CASE("non-finite coordinates are rejected") {
    FlowModel f = random_flow(3, 6, 14);
    Tensor x(2, 3);
    x(1, 1) = NAN;
    CHECK_THROWS_AS(flow_deform(x, Encoding(6, 0.0), f), NumericError);
  }

  TEST_CASE("flow parameter and input gradients pass grad check") {
    std::mt19937_64 rng(15);
    FlowModel f = random_flow(3, 4, 16);
    const Tensor x = random_tensor(5, 3, rng);
    const Tensor target = random_tensor(6, 3, rng);
    const Tensor code = random_tensor(1, 4, rng);
    for (CouplingRoute route : {CouplingRoute::fused, CouplingRoute::reference}) {
      const auto ps = f.parameters();
      const auto res = grad_check_params(
          [&](Tape& t) {
            return chamfer_loss(f.forward(t, t.constant(x), t.constant(code), route), target);
          },
          ps, {});
      CHECK(res.max_rel_error < 1e-5);
    }
    const auto res = grad_check(
        [&](Tape& t, std::span<const Var> in) {
          (void)t;
          return chamfer_loss(f.forward(t, in[0], in[1]), target);
        },
        std::vector<Tensor>{x, code});
    CHECK(res.max_rel_error < 1e-5);
  }

  TEST_CASE("parameter names follow the block layout") {
    FlowModel f = random_flow(2, 4, 17);
    std::vector<std::string> names;
    for (auto* p : f.parameters()) names.push_back(p->name);
    CHECK(std::find(names.begin(), names.end(), "flow.block1.map_s.w_enc") != names.end());
    CHECK(std::find(names.begin(), names.end(), "flow.block0.proj.weight") != names.end());
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
  }
}
