#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "benn/analysis/analysis.hpp"
#include "benn/common/error.hpp"
#include "benn/common/parallel.hpp"
#include "benn/common/rng.hpp"

namespace benn {
namespace {

double normal_pdf(double x, double s) {
  const double z = x / s;
  return std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * std::numbers::pi));
}

double sign_of(double v) { return v >= 0.0 ? 1.0 : -1.0; }

// Variance of zero-centred samples with the standard error of the variance.
Estimate variance_estimate(std::span<const double> y) {
  const double n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : y) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  return {m2 * n / (n - 1.0), std::sqrt(std::max(0.0, m4 - m2 * m2) / n)};
}

std::vector<double> breakpoints_for(double sigma, double sign) {
  std::vector<double> p;
  for (double k : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) p.push_back(sign * k * sigma);
  for (double k : {1.0, 2.0, 4.0}) p.push_back(sign * k);
  return p;
}

}  // namespace

Estimate mean_estimate(std::span<const double> samples) {
  if (samples.empty()) throw UsageError("mean_estimate: no samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  if (samples.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

FlipProbabilities flip_probabilities(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw UsageError("compute_B: sigma must be positive");
  const double lim = 8.0 * std::max(1.0, sigma);
  const auto pos = breakpoints_for(sigma, 1.0);
  const auto neg = breakpoints_for(sigma, -1.0);
  FlipProbabilities p;
  // Pr(x < 0 and x + dx >= 0): inner integral over dx in [-x, lim].
  p.up = integrate(
      [&](double x) {
        const double inner = integrate([&](double d) { return normal_pdf(d, sigma); }, -x, lim, pos, 1e-15, 1e-12);
        return normal_pdf(x, 1.0) * inner;
      },
      -lim, 0.0, neg, 1e-13, 1e-10);
  // Pr(x >= 0 and x + dx < 0): inner integral over dx in [-lim, -x].
  p.down = integrate(
      [&](double x) {
        const double inner = integrate([&](double d) { return normal_pdf(d, sigma); }, -lim, -x, neg, 1e-15, 1e-12);
        return normal_pdf(x, 1.0) * inner;
      },
      0.0, lim, pos, 1e-13, 1e-10);
  return p;
}

double compute_B(double sigma) {
  const auto p = flip_probabilities(sigma);
  return 4.0 * (p.up + p.down);
}

Estimate compute_B_monte_carlo(double sigma, std::size_t samples, std::uint64_t seed) {
  if (!(sigma > 0.0)) throw UsageError("compute_B: sigma must be positive");
  if (samples == 0) throw UsageError("compute_B: zero samples");
  Rng rng = make_rng(seed, 0xb);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = gauss(rng);
    const double d = sigma * gauss(rng);
    flips += sign_of(x) != sign_of(x + d);
  }
  const double p = static_cast<double>(flips) / static_cast<double>(samples);
  return {4.0 * p, 4.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(samples))};
}

std::vector<BRow> b_table(std::span<const double> sigmas, std::size_t mc_samples, std::uint64_t seed) {
  std::vector<BRow> rows;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    BRow r;
    r.sigma = sigmas[i];
    r.b = compute_B(r.sigma);
    r.r = r.sigma * r.sigma;
    if (mc_samples > 0) r.b_mc = compute_B_monte_carlo(r.sigma, mc_samples, derive_seed(seed, i));
    rows.push_back(r);
  }
  return rows;
}

VarianceReport verify_theorem1(std::size_t fan_in, double sigma_w, double sigma, std::span<const std::size_t> ks,
                               std::size_t trials, std::uint64_t seed, double tolerance, unsigned threads) {
  if (fan_in == 0 || !(sigma_w > 0.0) || !(sigma > 0.0) || trials < 2) {
    throw UsageError("verify_theorem1: fan_in, sigma_w, sigma must be positive and trials >= 2");
  }
  for (auto k : ks) {
    if (k == 0) throw UsageError("verify_theorem1: K must be positive");
  }
  const std::size_t kmax = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());
  const std::size_t nk = ks.size();
  // Per trial: real, act, weight, both, then (act, weight, both) per K.
  const std::size_t width = 4 + 3 * nk;
  std::vector<double> out(trials * width);

  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng = make_rng(seed, t);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(fan_in), dx(fan_in), w(fan_in), gamma(fan_in);
    std::vector<std::size_t> flipped;
    for (std::size_t i = 0; i < fan_in; ++i) {
      x[i] = gauss(rng);
      dx[i] = sigma * gauss(rng);
      w[i] = sigma_w * gauss(rng);
      gamma[i] = sign_of(x[i] + dx[i]) - sign_of(x[i]);
      if (gamma[i] != 0.0) flipped.push_back(i);
    }
    double* o = out.data() + t * width;
    double real = 0, act = 0, wt = 0, both = 0;
    for (std::size_t i = 0; i < fan_in; ++i) {
      real += w[i] * dx[i];
      act += w[i] * gamma[i];
      wt += sign_of(w[i]) * dx[i];
      both += sign_of(w[i]) * gamma[i];
    }
    o[0] = real;
    o[1] = act;
    o[2] = wt;
    o[3] = both;
    // Bagging members: independent weights, shared x and dx. Only flipped
    // coordinates contribute to the activation-binarized outputs, so their
    // weights are the only ones drawn.
    std::vector<double> sum_act(nk, 0.0), sum_wt(nk, 0.0), sum_both(nk, 0.0);
    for (std::size_t k = 0; k < kmax; ++k) {
      double m_act = 0, m_both = 0, m_wt = 0;
      for (std::size_t i : flipped) {
        const double wi = sigma_w * gauss(rng);
        m_act += wi * gamma[i];
        m_both += sign_of(wi) * gamma[i];
      }
      std::uint64_t bits = 0;
      for (std::size_t i = 0; i < fan_in; ++i) {
        if (i % 64 == 0) bits = rng();
        m_wt += ((bits >> (i % 64)) & 1 ? 1.0 : -1.0) * dx[i];
      }
      for (std::size_t j = 0; j < nk; ++j) {
        if (k < ks[j]) {
          sum_act[j] += m_act;
          sum_wt[j] += m_wt;
          sum_both[j] += m_both;
        }
      }
    }
    for (std::size_t j = 0; j < nk; ++j) {
      const double inv = 1.0 / static_cast<double>(ks[j]);
      o[4 + 3 * j] = sum_act[j] * inv;
      o[5 + 3 * j] = sum_wt[j] * inv;
      o[6 + 3 * j] = sum_both[j] * inv;
    }
  });

  VarianceReport rep;
  rep.fan_in = fan_in;
  rep.sigma_w = sigma_w;
  rep.sigma = sigma;
  rep.trials = trials;
  rep.b = compute_B(sigma);
  rep.r = sigma * sigma;
  rep.tolerance = tolerance;
  std::vector<double> col(trials);
  auto column = [&](std::size_t c) {
    for (std::size_t t = 0; t < trials; ++t) col[t] = out[t * width + c];
    return variance_estimate(col);
  };
  rep.real = column(0);
  rep.activation = column(1);
  rep.weight = column(2);
  rep.both = column(3);
  for (std::size_t j = 0; j < nk; ++j) rep.bagging.push_back({ks[j], column(4 + 3 * j), column(5 + 3 * j), column(6 + 3 * j)});

  auto check_precision = [&](const char* name, const Estimate& e, double expected) {
    const double rel = 3.0 * e.se / expected;
    if (rel > rep.tolerance) {
      rep.warnings.push_back(std::string(name) + ": 3 standard errors are " + std::to_string(rel) +
                             " relative; tolerance widened from " + std::to_string(rep.tolerance));
      rep.tolerance = rel;
    }
  };
  check_precision("real", rep.real, rep.expected_real());
  check_precision("activation", rep.activation, rep.expected_activation());
  check_precision("weight", rep.weight, rep.expected_weight());
  check_precision("both", rep.both, rep.expected_both());
  return rep;
}

Theorem2Report verify_theorem2(std::span<const std::size_t> widths, double sigma_w, double sigma, std::size_t trials,
                               std::size_t samples_per_trial, std::uint64_t seed, unsigned threads) {
  if (widths.size() < 2) throw UsageError("verify_theorem2: need at least one layer (two widths)");
  if (!(sigma_w > 0.0) || !(sigma > 0.0) || trials == 0 || samples_per_trial < 2) {
    throw UsageError("verify_theorem2: sigma_w, sigma must be positive, trials >= 1, samples >= 2");
  }
  for (auto w : widths) {
    if (w == 0) throw UsageError("verify_theorem2: zero layer width");
  }
  const std::size_t layers = widths.size() - 1;
  const std::size_t s_count = samples_per_trial;
  constexpr std::size_t kRegimes = 4;
  // Squared output changes, [trial][regime][sample].
  std::vector<double> sq(trials * kRegimes * s_count);

  parallel_for(trials, threads, [&](std::size_t t) {
    Rng rng = make_rng(seed, t);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> w(layers);
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t l = 0; l < layers; ++l) {
        w[l].resize(widths[l] * widths[l + 1]);
        for (auto& v : w[l]) v = sigma_w * gauss(rng);
      }
      std::vector<double> x(widths[0]), xp(widths[0]);
      for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = gauss(rng);
        xp[i] = x[i] + sigma * gauss(rng);
      }
      for (std::size_t regime = 0; regime < kRegimes; ++regime) {
        const bool bin_act = regime == 1 || regime == 3;
        const bool bin_w = regime == 2 || regime == 3;
        auto run = [&](std::vector<double> h) {
          for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = widths[l], outw = widths[l + 1];
            std::vector<double> next(outw, 0.0);
            for (std::size_t o = 0; o < outw; ++o) {
              double acc = 0.0;
              for (std::size_t i = 0; i < in; ++i) {
                const double wv = bin_w ? sign_of(w[l][o * in + i]) : w[l][o * in + i];
                acc += wv * (bin_act ? sign_of(h[i]) : h[i]);
              }
              next[o] = acc;
            }
            h = std::move(next);
          }
          return h[0];
        };
        const double d = run(xp) - run(x);
        sq[(t * kRegimes + regime) * s_count + s] = d * d;
      }
    }
  });

  const double b = compute_B(sigma);
  double prod_real = 1.0, prod_bin = 1.0;
  for (std::size_t l = 0; l < layers; ++l) {
    prod_real *= static_cast<double>(widths[l]) * sigma_w * sigma_w;
    prod_bin *= static_cast<double>(widths[l]);
  }
  const double bounds[kRegimes] = {sigma * sigma * prod_real, b * prod_real, sigma * sigma * prod_bin, b * prod_bin};
  const char* names[kRegimes] = {"real", "activation", "weight", "both"};

  Theorem2Report rep;
  rep.widths.assign(widths.begin(), widths.end());
  rep.sigma_w = sigma_w;
  rep.sigma = sigma;
  rep.trials = trials;
  rep.samples_per_trial = s_count;
  for (std::size_t r = 0; r < kRegimes; ++r) {
    std::size_t ok = 0;
    std::vector<double> all;
    all.reserve(trials * s_count);
    for (std::size_t t = 0; t < trials; ++t) {
      const std::span<const double> v(sq.data() + (t * kRegimes + r) * s_count, s_count);
      const Estimate e = mean_estimate(v);
      ok += e.value <= bounds[r] + 3.0 * e.se;
      all.insert(all.end(), v.begin(), v.end());
    }
    rep.regimes.push_back({names[r], bounds[r], static_cast<double>(ok) / static_cast<double>(trials),
                           mean_estimate(all)});
  }
  return rep;
}

}  // namespace benn
