#include <doctest.h>
#include <numeric>

#include "meshflow/error.hpp"
#include "meshflow/gradcheck.hpp"
#include "meshflow/nearest.hpp"
#include "meshflow/optim.hpp"
#include "support.hpp"

using namespace meshflow;
using namespace testing;

namespace {

constexpr int kSeeds = 20;

// Max relative error over kSeeds random draws of the given input shapes.
double worst_over_seeds(const GraphFn& graph, const std::vector<std::array<std::size_t, 2>>& shapes,
                        double lo = -1.0, double hi = 1.0) {
  double worst = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const auto res = grad_check(graph, [&](std::size_t) {
      std::vector<Tensor> in;
      for (const auto& s : shapes) in.push_back(random_tensor(s[0], s[1], rng, lo, hi));
      return in;
    });
    worst = std::max(worst, res.max_rel_error);
  }
  return worst;
}

// Fixed random projection so every output entry influences the scalar.
Var project(const Var& x, std::uint64_t seed = 77) {
  std::mt19937_64 rng(seed);
  return weighted_sum(x, random_tensor(x.rows(), x.cols(), rng));
}

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("pointwise_linear with identity weight and zero bias is the identity") {
    Tape t;
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor(5, 3, rng);
    Tensor eye(3, 3);
    for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
    CHECK(pointwise_linear(t.constant(x), t.constant(eye), t.constant(Tensor(1, 3))).value() == x);
  }

  TEST_CASE("pointwise_linear hand-computed 2x2 product") {
    Tape t;
    const Tensor x(2, 2, {1.0, 2.0, -3.0, 0.5});
    const Tensor w(2, 2, {2.0, -1.0, 0.25, 4.0});
    const Tensor b(1, 2, {0.5, -0.5});
    const Tensor out = pointwise_linear(t.constant(x), t.constant(w), t.constant(b)).value();
    CHECK(out(0, 0) == 1 * 2.0 + 2 * 0.25 + 0.5);
    CHECK(out(0, 1) == 1 * -1.0 + 2 * 4.0 - 0.5);
    CHECK(out(1, 0) == -3 * 2.0 + 0.5 * 0.25 + 0.5);
    CHECK(out(1, 1) == -3 * -1.0 + 0.5 * 4.0 - 0.5);
  }

  TEST_CASE("pointwise_linear rows are computed independently of their position") {
    std::mt19937_64 rng(4);
    const Tensor x = random_tensor(37, 19, rng);
    const Tensor w = random_tensor(19, 70, rng);
    const Tensor b = random_tensor(1, 70, rng);
    Tape t;
    const Tensor full = pointwise_linear(t.constant(x), t.constant(w), t.constant(b)).value();
    for (std::size_t r : {0ul, 7ul, 36ul}) {
      Tensor one(1, 19);
      for (std::size_t k = 0; k < 19; ++k) one(0, k) = x(r, k);
      const Tensor single = pointwise_linear(t.constant(one), t.constant(w), t.constant(b)).value();
      for (std::size_t c = 0; c < 70; ++c) CHECK(single(0, c) == full(r, c));
    }
  }

  TEST_CASE("pointwise_linear shape mismatch") {
    Tape t;
    CHECK_THROWS_AS(pointwise_linear(t.constant(Tensor(2, 3)), t.constant(Tensor(2, 2)),
                                     t.constant(Tensor(1, 2))),
                    ShapeError);
    CHECK_THROWS_AS(pointwise_linear(t.constant(Tensor(2, 3)), t.constant(Tensor(3, 2)),
                                     t.constant(Tensor(1, 3))),
                    ShapeError);
  }

  TEST_CASE("pointwise_linear gradient within 1e-6 (linear layer within 1e-8)") {
    const double worst = worst_over_seeds(
        [](Tape&, std::span<const Var> in) { return project(pointwise_linear(in[0], in[1], in[2])); },
        {{4, 3}, {3, 5}, {1, 5}});
    CHECK(worst < 1e-8);
  }

  TEST_CASE("relu values") {
    Tape t;
    const Tensor out = relu(t.constant(Tensor(1, 2, {-1.0, 2.0}))).value();
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 2.0);
  }

  TEST_CASE("batchnorm of a constant channel gives beta") {
    Tape t;
    BatchNormStats stats{Tensor(1, 2), Tensor(1, 2, 1.0)};
    Tensor x(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
      x(i, 0) = 0.3;
      x(i, 1) = static_cast<double>(i);
    }
    const Tensor out = batchnorm_points(t.constant(x), t.constant(Tensor(1, 2, {2.5, 1.0})),
                                        t.constant(Tensor(1, 2, {-0.7, 0.0})), stats,
                                        NormMode::train)
                           .value();
    for (std::size_t i = 0; i < 4; ++i) CHECK(out(i, 0) == -0.7);
  }

  TEST_CASE("batchnorm train statistics, running update and eval mode") {
    std::mt19937_64 rng(6);
    const Tensor x = random_tensor(9, 3, rng);
    const Tensor gamma = random_tensor(1, 3, rng);
    const Tensor beta = random_tensor(1, 3, rng);
    BatchNormStats stats{random_tensor(1, 3, rng), random_tensor(1, 3, rng, 0.5, 2.0)};
    const BatchNormStats before = stats;
    Tape t;
    const Tensor out = batchnorm_points(t.constant(x), t.constant(gamma), t.constant(beta), stats,
                                        NormMode::train)
                           .value();
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 9; ++i) mean += x(i, c) / 9.0;
      double var = 0.0;
      for (std::size_t i = 0; i < 9; ++i) var += (x(i, c) - mean) * (x(i, c) - mean) / 9.0;
      for (std::size_t i = 0; i < 9; ++i) {
        const double want = (x(i, c) - mean) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
        CHECK(out(i, c) == doctest::Approx(want).epsilon(1e-12));
      }
      CHECK(stats.running_mean[c] ==
            doctest::Approx(0.9 * before.running_mean[c] + 0.1 * mean).epsilon(1e-12));
      CHECK(stats.running_var[c] ==
            doctest::Approx(0.9 * before.running_var[c] + 0.1 * var).epsilon(1e-12));
    }
    const BatchNormStats frozen = stats;
    const Tensor ev = batchnorm_points(t.constant(x), t.constant(gamma), t.constant(beta), stats,
                                       NormMode::eval)
                          .value();
    CHECK(stats.running_mean == frozen.running_mean);
    CHECK(stats.running_var == frozen.running_var);
    for (std::size_t c = 0; c < 3; ++c) {
      const double want = (x(2, c) - frozen.running_mean[c]) /
                              std::sqrt(frozen.running_var[c] + 1e-5) * gamma[c] + beta[c];
      CHECK(ev(2, c) == doctest::Approx(want).epsilon(1e-12));
    }
  }

  TEST_CASE("batchnorm train mode with one point is a config error") {
    Tape t;
    BatchNormStats stats{Tensor(1, 2), Tensor(1, 2, 1.0)};
    CHECK_THROWS_AS(batchnorm_points(t.constant(Tensor(1, 2)), t.constant(Tensor(1, 2, 1.0)),
                                     t.constant(Tensor(1, 2)), stats, NormMode::train),
                    ConfigError);
    CHECK_NOTHROW(batchnorm_points(t.constant(Tensor(1, 2)), t.constant(Tensor(1, 2, 1.0)),
                                   t.constant(Tensor(1, 2)), stats, NormMode::eval));
  }

  TEST_CASE("maxpool [[1,5],[3,2]] -> [3,5], gradient on (1,0) and (0,1)") {
    Tape t;
    const Var x = t.input(Tensor(2, 2, {1.0, 5.0, 3.0, 2.0}));
    const Var m = maxpool_points(x);
    CHECK(m.value() == Tensor(1, 2, {3.0, 5.0}));
    t.backward(sum(m));
    CHECK(x.grad() == Tensor(2, 2, {0.0, 1.0, 1.0, 0.0}));
  }

  TEST_CASE("maxpool routes ties to the first maximal row") {
    Tape t;
    const Var x = t.input(Tensor(3, 1, {2.0, 2.0, 1.0}));
    t.backward(sum(maxpool_points(x)));
    CHECK(x.grad() == Tensor(3, 1, {1.0, 0.0, 0.0}));
  }

  TEST_CASE("maxpool is exactly invariant to row permutations") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = random_tensor(30, 7, rng);
      Tape t;
      const Tensor a = maxpool_points(t.constant(x)).value();
      std::vector<std::size_t> perm(30);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Tensor y(30, 7);
      for (std::size_t i = 0; i < 30; ++i) {
        for (std::size_t c = 0; c < 7; ++c) y(i, c) = x(perm[i], c);
      }
      CHECK(maxpool_points(t.constant(y)).value() == a);
    }
  }

  TEST_CASE("concat_broadcast values") {
    Tape t;
    const Tensor one = concat_broadcast(t.constant(Tensor(1, 2, {1, 2})),
                                        t.constant(Tensor(1, 1, {3}))).value();
    CHECK(one == Tensor(1, 3, {1, 2, 3}));
    const Tensor three = concat_broadcast(t.constant(Tensor(3, 1, {1, 2, 3})),
                                          t.constant(Tensor(1, 2, {8, 9}))).value();
    CHECK(three == Tensor(3, 3, {1, 8, 9, 2, 8, 9, 3, 8, 9}));
    CHECK_THROWS_AS(concat_broadcast(t.constant(Tensor(3, 1)), t.constant(Tensor(2, 2))),
                    ShapeError);
  }

  TEST_CASE("gradient checks for every op across 20 seeds") {
    struct Case {
      const char* name;
      GraphFn graph;
      std::vector<std::array<std::size_t, 2>> shapes;
      double tol;
    };
    const std::vector<Case> cases = {
        {"relu", [](Tape&, std::span<const Var> in) { return project(relu(in[0])); }, {{5, 4}}, 1e-6},
        {"tanh", [](Tape&, std::span<const Var> in) { return project(tanh(in[0])); }, {{5, 4}}, 1e-6},
        {"scale", [](Tape&, std::span<const Var> in) { return project(scale(in[0], -1.7)); }, {{3, 4}}, 1e-6},
        {"add", [](Tape&, std::span<const Var> in) { return project(add(in[0], in[1])); }, {{3, 4}, {3, 4}}, 1e-6},
        {"sum", [](Tape&, std::span<const Var> in) { return sum(in[0]); }, {{3, 4}}, 1e-6},
        {"reshape", [](Tape&, std::span<const Var> in) { return project(reshape(in[0], 6, 2)); }, {{3, 4}}, 1e-6},
        {"batchnorm", [](Tape& t, std::span<const Var> in) {
           static BatchNormStats stats;
           stats = {Tensor(1, 3), Tensor(1, 3, 1.0)};
           (void)t;
           return project(batchnorm_points(in[0], in[1], in[2], stats, NormMode::train));
         }, {{6, 3}, {1, 3}, {1, 3}}, 1e-6},
        {"batchnorm eval", [](Tape&, std::span<const Var> in) {
           static BatchNormStats stats;
           stats = {Tensor(1, 3, {0.1, -0.2, 0.3}), Tensor(1, 3, {0.5, 1.5, 2.0})};
           return project(batchnorm_points(in[0], in[1], in[2], stats, NormMode::eval));
         }, {{1, 3}, {1, 3}, {1, 3}}, 1e-6},
        {"maxpool", [](Tape&, std::span<const Var> in) { return project(maxpool_points(in[0])); }, {{6, 4}}, 1e-6},
        {"concat_broadcast", [](Tape&, std::span<const Var> in) {
           return project(concat_broadcast(in[0], in[1]));
         }, {{4, 2}, {1, 3}}, 1e-6},
        {"vstack", [](Tape&, std::span<const Var> in) { return project(vstack(in[0], in[1])); }, {{2, 3}, {4, 3}}, 1e-6},
        {"mask_column", [](Tape&, std::span<const Var> in) { return project(mask_column(in[0], 1)); }, {{4, 3}}, 1e-6},
        {"affine_couple", [](Tape&, std::span<const Var> in) {
           return project(affine_couple(in[0], in[1], in[2], 2));
         }, {{5, 3}, {5, 1}, {5, 1}}, 1e-6},
        {"chain relu(Wx)", [](Tape&, std::span<const Var> in) {
           return project(relu(pointwise_linear(in[0], in[1])));
         }, {{4, 3}, {3, 6}}, 1e-6},
    };
    for (const auto& c : cases) {
      CAPTURE(c.name);
      CHECK(worst_over_seeds(c.graph, c.shapes) < c.tol);
    }
  }

  TEST_CASE("chamfer_loss of a cloud with itself is zero with zero gradient") {
    std::mt19937_64 rng(3);
    const Tensor p = random_tensor(20, 3, rng);
    Tape t;
    const Var x = t.input(p);
    const Var l = chamfer_loss(x, p);
    CHECK(l.value().item() == 0.0);
    t.backward(l);
    const Tensor g0 = x.grad();
    for (double g : g0.values()) CHECK(g == 0.0);
  }

  TEST_CASE("chamfer_loss equals the brute-force oracle on random clouds") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t n = 1 + rng() % 500, m = 1 + rng() % 500;
      const PointCloud a = random_cloud(n, rng), b = random_cloud(m, rng);
      Tape t;
      const double v = chamfer_loss(t.constant(cloud_to_tensor(a)), cloud_to_tensor(b)).value().item();
      CHECK(std::abs(v - chamfer_bruteforce(a, b)) < 1e-12);
      CHECK(v == doctest::Approx(chamfer_oracle(a.points, b.points)).epsilon(1e-12));
    }
  }

  TEST_CASE("chamfer_loss gradient on 8 x 8 clouds within 1e-5") {
    std::mt19937_64 rng(99);
    double worst = 0.0;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const Tensor target = random_tensor(8, 3, rng);
      const auto res = grad_check(
          [&](Tape&, std::span<const Var> in) { return chamfer_loss(in[0], target); },
          [&](std::size_t) { return std::vector<Tensor>{random_tensor(8, 3, rng)}; });
      worst = std::max(worst, res.max_rel_error);
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("backward requires a scalar") {
    Tape t;
    const Var x = t.input(Tensor(2, 2, 1.0));
    CHECK_THROWS_AS(t.backward(relu(x)), ShapeError);
  }

  TEST_CASE("sum of a parameter has a gradient of ones; unused parameters get zeros") {
    Parameter p("p", Tensor(2, 3, 0.5));
    Parameter unused("unused", Tensor(1, 2, 1.0));
    p.zero_grad();
    unused.zero_grad();
    Tape t;
    t.param(unused);
    t.backward(sum(t.param(p)));
    CHECK(p.grad == Tensor(2, 3, 1.0));
    CHECK(unused.grad == Tensor(1, 2, 0.0));
  }

  TEST_CASE("a parameter used twice accumulates once per backward") {
    Parameter p("p", Tensor(1, 2, {1.0, 2.0}));
    p.zero_grad();
    Tape t;
    t.backward(sum(add(t.param(p), t.param(p))));
    CHECK(p.grad == Tensor(1, 2, 2.0));
  }

  TEST_CASE("non-finite op results raise numeric errors") {
    Tape t;
    CHECK_THROWS_AS(scale(t.constant(Tensor(1, 1, 1e308)), 1e10), NumericError);
    CHECK_THROWS_AS(affine_couple(t.constant(Tensor(1, 3)), t.constant(Tensor(1, 1, 31.0)),
                                  t.constant(Tensor(1, 1)), 0),
                    NumericError);
  }

  TEST_CASE("adam with zero gradient leaves parameters unchanged") {
    Parameter p("p", Tensor(2, 2, {1, -2, 3, 0.5}));
    const Tensor before = p.value;
    p.zero_grad();
    AdamState state;
    Parameter* ps[] = {&p};
    adam_step(ps, state, {});
    CHECK(p.value == before);
  }

  TEST_CASE("adam first steps match the textbook update") {
    Parameter p("p", Tensor(1, 2, {0.3, -0.2}));
    AdamState state;
    const AdamHyper h{0.01, 0.9, 0.999, 1e-8};
    double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {0.3, -0.2};
    const double grads[3][2] = {{0.5, -1.0}, {0.1, 2.0}, {-0.3, 0.0}};
    Parameter* ps[] = {&p};
    for (int step = 1; step <= 3; ++step) {
      p.grad = Tensor(1, 2, {grads[step - 1][0], grads[step - 1][1]});
      adam_step(ps, state, h);
      for (int k = 0; k < 2; ++k) {
        const double g = grads[step - 1][k];
        m[k] = 0.9 * m[k] + 0.1 * g;
        v[k] = 0.999 * v[k] + 0.001 * g * g;
        const double mh = m[k] / (1 - std::pow(0.9, step));
        const double vh = v[k] / (1 - std::pow(0.999, step));
        x[k] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(p.value[k] == doctest::Approx(x[k]).epsilon(1e-14));
      }
    }
  }

  TEST_CASE("frozen parameters are not updated") {
    Parameter p("p", Tensor(1, 2, 1.0), false);
    p.grad = Tensor(1, 2, 3.0);
    AdamState state;
    Parameter* ps[] = {&p};
    adam_step(ps, state, {});
    CHECK(p.value == Tensor(1, 2, 1.0));
    CHECK(state.moments.empty());
  }

  TEST_CASE("grad_check_params agrees with grad_check on a linear layer") {
    std::mt19937_64 rng(8);
    Parameter w("w", random_tensor(3, 4, rng));
    Parameter b("b", random_tensor(1, 4, rng));
    const Tensor x = random_tensor(5, 3, rng);
    Parameter* ps[] = {&w, &b};
    const auto res = grad_check_params(
        [&](Tape& t) { return project(pointwise_linear(t.constant(x), t.param(w), t.param(b))); }, ps,
        {});
    CHECK(res.max_rel_error < 1e-8);
    CHECK(res.entries_checked == 16);
  }

  TEST_CASE("relative error definition") {
    CHECK(relative_error(1.0, 1.0, 1e-6) == 0.0);
    CHECK(relative_error(2.0, 1.0, 1e-6) == 0.5);
    CHECK(relative_error(0.0, 1e-9, 1e-6) == doctest::Approx(1e-3));
  }
}
