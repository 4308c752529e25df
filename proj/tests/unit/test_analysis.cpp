#include <cmath>
#include <numbers>
#include <random>

#include "../oracles.hpp"
#include "benn/analysis/analysis.hpp"
#include "benn/common/error.hpp"
#include "doctest.h"

using namespace benn;

namespace {

double oracle_b(double sigma) { return 4.0 * oracle::flip_probability(sigma); }

void check_close(const Estimate& e, double expected, double rel_tol) {
  INFO("estimate " << e.value << " se " << e.se << " expected " << expected);
  CHECK(std::abs(e.value - expected) <= std::max(rel_tol * expected, 4.0 * e.se));
}

}  // namespace

TEST_CASE("integrate polynomials and a gaussian") {
  CHECK(integrate([](double x) { return x * x; }, 0.0, 3.0) == doctest::Approx(9.0).epsilon(1e-13));
  const double g = integrate([](double x) { return std::exp(-0.5 * x * x); }, -12.0, 12.0, std::vector<double>{0.0});
  CHECK(g == doctest::Approx(std::sqrt(2.0 * std::numbers::pi)).epsilon(1e-12));
  CHECK(integrate([](double) { return 1.0; }, 2.0, 2.0) == 0.0);
  CHECK_THROWS_AS(integrate([](double) { return 1.0; }, 2.0, 1.0), UsageError);
}

TEST_CASE("B matches the closed form over a sigma sweep") {
  for (double s : {1.5, 1.0, 0.5, 0.1, 0.01, 0.001, 3.0}) {
    INFO("sigma " << s);
    CHECK(compute_B(s) == doctest::Approx(oracle_b(s)).epsilon(1e-8));
  }
  CHECK(compute_B(1.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(compute_B(1.5) == doctest::Approx(1.2513).epsilon(1e-4));
  CHECK(compute_B(0.5) == doctest::Approx(0.5903).epsilon(1e-4));
  CHECK(compute_B(0.1) == doctest::Approx(0.1269).epsilon(1e-3));
}

TEST_CASE("flip probabilities are symmetric and B is monotone") {
  const auto p = flip_probabilities(0.3);
  CHECK(p.up == doctest::Approx(p.down).epsilon(1e-10));
  double prev = 0.0;
  for (double s = 0.05; s < 4.0; s *= 1.4) {
    const double b = compute_B(s);
    CHECK(b > prev);
    CHECK(b < 2.0);
    prev = b;
  }
}

TEST_CASE("B is below r for sigma > 1 and above it for sigma < 1") {
  for (double s : {1.2, 2.0, 5.0}) CHECK(compute_B(s) < s * s);
  for (double s : {0.9, 0.5, 0.1}) CHECK(compute_B(s) > s * s);
}

TEST_CASE("B rejects non-positive sigma") {
  CHECK_THROWS_AS(compute_B(0.0), UsageError);
  CHECK_THROWS_AS(compute_B(-1.0), UsageError);
  CHECK_THROWS_AS(compute_B_monte_carlo(0.0, 10, 1), UsageError);
}

TEST_CASE("Monte Carlo B agrees with quadrature") {
  const std::vector<double> sigmas = {0.1, 1.0};
  for (const auto& row : b_table(sigmas, 400000, 7)) {
    INFO("sigma " << row.sigma);
    CHECK(std::abs(row.b_mc.value - row.b) <= 4.0 * row.b_mc.se);
    CHECK(row.r == doctest::Approx(row.sigma * row.sigma));
  }
}

TEST_CASE("one-neuron variances match the closed forms") {
  const std::vector<std::size_t> ks = {4};
  const auto rep = verify_theorem1(64, 1.0, 1.0, ks, 40000, 3, 0.05, 1);
  check_close(rep.real, 64.0, rep.tolerance);
  check_close(rep.activation, 64.0 * oracle_b(1.0), rep.tolerance);
  check_close(rep.weight, 64.0, rep.tolerance);
  check_close(rep.both, 64.0 * oracle_b(1.0), rep.tolerance);
  REQUIRE(rep.bagging.size() == 1);
  check_close(rep.bagging[0].activation, 16.0, rep.tolerance);
  check_close(rep.bagging[0].weight, 16.0, rep.tolerance);
  check_close(rep.bagging[0].both, 16.0, rep.tolerance);
  // sigma = sigma_w = 1 gives B = r = 1, so every threshold is 1 and K = 4
  // bagging beats the real neuron.
  CHECK(rep.threshold_both() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(rep.bagging[0].both.value < rep.real.value);
}

TEST_CASE("bagging threshold at small noise") {
  const std::vector<std::size_t> ks = {8, 16};
  const auto rep = verify_theorem1(256, 1.0, 0.1, ks, 20000, 11, 0.05, 1);
  check_close(rep.real, 2.56, rep.tolerance);
  check_close(rep.both, 256.0 * oracle_b(0.1), rep.tolerance);
  CHECK(rep.threshold_both() == doctest::Approx(oracle_b(0.1) / 0.01).epsilon(1e-6));
  CHECK(rep.bagging[0].both.value > rep.real.value);
  CHECK(rep.bagging[1].both.value < rep.real.value);
}

TEST_CASE("one-neuron report does not depend on thread count") {
  const std::vector<std::size_t> ks = {2};
  const auto a = verify_theorem1(16, 0.5, 0.3, ks, 2000, 5, 0.05, 1);
  const auto b = verify_theorem1(16, 0.5, 0.3, ks, 2000, 5, 0.05, 3);
  CHECK(a.both.value == b.both.value);
  CHECK(a.bagging[0].weight.value == b.bagging[0].weight.value);
}

TEST_CASE("tolerance widens when too few trials") {
  const std::vector<std::size_t> ks;
  const auto rep = verify_theorem1(8, 1.0, 0.5, ks, 50, 1, 0.01, 1);
  CHECK(rep.tolerance > 0.01);
  CHECK_FALSE(rep.warnings.empty());
}

TEST_CASE("one-neuron argument errors") {
  const std::vector<std::size_t> ks = {0};
  CHECK_THROWS_AS(verify_theorem1(8, 1.0, 0.0, {}, 100, 1), UsageError);
  CHECK_THROWS_AS(verify_theorem1(8, 1.0, 1.0, ks, 100, 1), UsageError);
}

TEST_CASE("multi-layer bounds hold per trial") {
  const std::vector<std::size_t> widths = {16, 8, 1};
  const auto rep = verify_theorem2(widths, 1.0, 0.3, 300, 64, 9, 1);
  REQUIRE(rep.regimes.size() == 4);
  CHECK(rep.regimes[0].bound == doctest::Approx(0.09 * 16 * 8));
  CHECK(rep.regimes[3].bound == doctest::Approx(oracle_b(0.3) * 16 * 8).epsilon(1e-8));
  for (const auto& r : rep.regimes) {
    INFO(r.name << " fraction " << r.satisfied_fraction << " pooled " << r.pooled.value << " bound " << r.bound);
    CHECK(r.satisfied_fraction >= 0.9);
  }
  // The real stack attains its bound in expectation.
  CHECK(std::abs(rep.regimes[0].pooled.value - rep.regimes[0].bound) <= 4.0 * rep.regimes[0].pooled.se);
}

TEST_CASE("random-weight robustness: zero noise and monotonicity") {
  const auto cfg = NetworkConfig::parse("input 6\nfc width=8\nsign\nfc width=3 wbits=1\n");
  RealTensor x({32, 6});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  for (float& v : x.values()) v = u(rng);
  PerturbationSpec spec;
  spec.variance = 0.0;
  spec.trials = 2;
  CHECK(robustness_random(cfg, spec, x, 3).value == 0.0);
  double prev = 0.0;
  for (double var : {0.001, 0.01, 0.1, 1.0}) {
    spec.variance = var;
    const double v = robustness_random(cfg, spec, x, 40, 1.0, true).value;
    CHECK(v > prev);
    prev = v;
  }
  spec.variance = 11.0;
  CHECK_THROWS_AS(robustness_random(cfg, spec, x, 1), UsageError);
  spec.variance = 0.1;
  spec.trials = 0;
  CHECK_THROWS_AS(robustness_random(cfg, spec, x, 1), UsageError);
}

TEST_CASE("random-weight robustness of a linear layer matches the analytic value") {
  // One real fc layer of fan-in n and C outputs: E ||W dx||^2 = C n sigma^2.
  const auto cfg = NetworkConfig::parse("input 20\nfc width=5 bias=0\n");
  RealTensor x({16, 20}, 0.25f);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i % 7) * 0.1f;
  PerturbationSpec spec;
  spec.variance = 0.04;
  spec.trials = 4;
  spec.seed = 3;
  const auto e = robustness_random(cfg, spec, x, 200, 1.0, true);
  INFO(e.value << " +- " << e.se);
  CHECK(std::abs(e.value - 5.0 * 20.0 * 0.04) <= 3.0 * e.se);
}

TEST_CASE("random-weight robustness ignores input order") {
  const auto cfg = NetworkConfig::parse("input 4\nfc width=6\nbatchnorm\nsign\nfc width=2\n");
  RealTensor x({10, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(static_cast<float>(i));
  RealTensor rev({10, 4});
  for (std::size_t r = 0; r < 10; ++r)
    for (std::size_t c = 0; c < 4; ++c) rev[r * 4 + c] = x[(9 - r) * 4 + c];
  PerturbationSpec spec;
  spec.variance = 0.05;
  spec.trials = 3;
  const double a = robustness_random(cfg, spec, x, 5).value;
  const double b = robustness_random(cfg, spec, rev, 5).value;
  CHECK(a == doctest::Approx(b).epsilon(1e-6));
}

TEST_CASE("trained robustness of a constant predictor is zero") {
  Dataset d;
  d.images = RealTensor({5, 2}, 0.0f);
  d.labels = {0, 1, 0, 1, 0};
  d.num_classes = 2;
  PerturbationSpec spec;
  spec.variance = 0.5;
  spec.trials = 4;
  const auto e = robustness_trained([](const RealTensor& x) { return std::vector<int>(x.dim(0), 0); }, d, spec);
  CHECK(e.value == 0.0);
  // A predictor that reads the sign of the first feature flips with noise.
  const auto f = robustness_trained(
      [](const RealTensor& x) {
        std::vector<int> p(x.dim(0));
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = x[i * 2] >= 0 ? 0 : 1;
        return p;
      },
      d, spec);
  CHECK(f.value > 0.0);
}

TEST_CASE("stability over a window") {
  std::vector<double> constant(30, 0.9);
  CHECK(stability_track(constant).stddev == 0.0);
  std::vector<double> alt;
  for (int i = 0; i < 20; ++i) alt.push_back(i % 2 ? 0.9 : 0.8);
  CHECK(stability_track(alt).stddev == doctest::Approx(0.0513).epsilon(1e-3));
  CHECK(stability_track(alt).window.size() == 20);
  CHECK_THROWS_AS(stability_track(std::vector<double>(5, 0.5)), UsageError);
}
