#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "benn/dataset.hpp"
#include "benn/nn/config.hpp"
#include "benn/nn/network.hpp"

namespace benn {

// Monte-Carlo estimate with its standard error.
struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

// Mean and standard error of the mean of `samples` (se = 0 for one sample).
Estimate mean_estimate(std::span<const double> samples);

// Adaptive 15-point Gauss-Kronrod on [a, b] with optional interior
// breakpoints. Throws NumericalError if the tolerance is not reached.
double integrate(const std::function<double(double)>& f, double a, double b, std::span<const double> breakpoints = {},
                 double abs_tol = 1e-12, double rel_tol = 1e-10);

// Pr(gamma = +2) and Pr(gamma = -2) for gamma = sign(x + dx) - sign(x),
// x ~ N(0, 1), dx ~ N(0, sigma^2), by nested quadrature over
// |x|, |dx| <= 8 max(1, sigma).
struct FlipProbabilities {
  double up = 0.0;
  double down = 0.0;
};
FlipProbabilities flip_probabilities(double sigma);

// B = E[gamma^2] = 4 (Pr(gamma = 2) + Pr(gamma = -2)). Throws UsageError for
// sigma <= 0.
double compute_B(double sigma);
Estimate compute_B_monte_carlo(double sigma, std::size_t samples, std::uint64_t seed);

struct BRow {
  double sigma = 0.0;
  double b = 0.0;
  double r = 0.0;
  Estimate b_mc;
};
std::vector<BRow> b_table(std::span<const double> sigmas, std::size_t mc_samples, std::uint64_t seed);

// One-neuron, one-layer model: w ~ N(0, sigma_w^2)^fan_in, x ~ N(0, 1),
// dx ~ N(0, sigma^2). Output-change variances for the real, activation-,
// weight- and both-binarized neurons, and for K-member bagging of each
// binarized regime (members share x and dx, weights are independent).
struct BaggingRow {
  std::size_t k = 0;
  Estimate activation;  // A_b members
  Estimate weight;      // W_b members
  Estimate both;        // E_b members
};

struct VarianceReport {
  std::size_t fan_in = 0;
  double sigma_w = 0.0;
  double sigma = 0.0;
  std::size_t trials = 0;
  double b = 0.0;
  double r = 0.0;
  double tolerance = 0.05;
  std::vector<std::string> warnings;

  Estimate real, activation, weight, both;
  std::vector<BaggingRow> bagging;

  double expected_real() const { return static_cast<double>(fan_in) * sigma_w * sigma_w * sigma * sigma; }
  double expected_activation() const { return b * static_cast<double>(fan_in) * sigma_w * sigma_w; }
  double expected_weight() const { return static_cast<double>(fan_in) * sigma * sigma; }
  double expected_both() const { return b * static_cast<double>(fan_in); }
  // K thresholds above which bagging beats the real neuron.
  double threshold_activation() const { return b / r; }
  double threshold_weight() const { return 1.0 / (sigma_w * sigma_w); }
  double threshold_both() const { return b / (r * sigma_w * sigma_w); }
};

// Per-trial RNG streams derive from (seed, trial), so results do not depend
// on `threads`. If 3 standard errors exceed `tolerance` (relative), the
// tolerance is widened and a warning recorded.
VarianceReport verify_theorem1(std::size_t fan_in, double sigma_w, double sigma, std::span<const std::size_t> ks,
                               std::size_t trials, std::uint64_t seed, double tolerance = 0.05, unsigned threads = 0);

// Random linear stacks with widths [n_0, ..., n_L] (|w_l| = n_{l-1}), no
// batchnorm; the first output unit is observed. Each trial estimates the
// output-change variance from `samples_per_trial` fresh (w, x, dx) draws and
// counts as satisfied when estimate <= bound + 3 SE.
struct Theorem2Regime {
  std::string name;
  double bound = 0.0;
  double satisfied_fraction = 0.0;
  Estimate pooled;  // all samples of all trials
};

struct Theorem2Report {
  std::vector<std::size_t> widths;
  double sigma_w = 0.0;
  double sigma = 0.0;
  std::size_t trials = 0;
  std::size_t samples_per_trial = 0;
  std::vector<Theorem2Regime> regimes;  // real, activation, weight, both
};

Theorem2Report verify_theorem2(std::span<const std::size_t> widths, double sigma_w, double sigma, std::size_t trials,
                               std::size_t samples_per_trial, std::uint64_t seed, unsigned threads = 0);

enum class PerturbTarget { kInput, kWeights };

struct PerturbationSpec {
  PerturbTarget target = PerturbTarget::kInput;
  double variance = 0.01;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
};

// E_w E_dx || f(x + dx; w) - f(x; w) ||^2 with weights ~ N(0, weight_std^2),
// biases and batchnorm affine terms at identity, batchnorm statistics
// calibrated on the clean inputs. f is the softmax output, or the raw last
// layer when `raw_output`. The standard error is taken across weight
// samples.
Estimate robustness_random(const NetworkConfig& config, const PerturbationSpec& spec, const RealTensor& inputs,
                           std::size_t weight_samples, double weight_std = 1.0, bool raw_output = false);

using Predictor = std::function<std::vector<int>(const RealTensor&)>;

// E_dx (err(x + dx) - err(x))^2 where err is the 0/1 error rate over the
// dataset. Returns one squared change per noise draw so callers can pair
// draws across models.
std::vector<double> robustness_trained_samples(const Predictor& predict, const Dataset& data,
                                               const PerturbationSpec& spec);
Estimate robustness_trained(const Predictor& predict, const Dataset& data, const PerturbationSpec& spec);

struct StabilityReport {
  std::vector<double> window;
  double stddev = 0.0;
};

// Sample standard deviation of the last `window` accuracies.
StabilityReport stability_track(std::span<const double> accuracies, std::size_t window = 20);

}  // namespace benn
