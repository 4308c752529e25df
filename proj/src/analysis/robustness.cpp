#include <cmath>
#include <random>

#include "benn/analysis/analysis.hpp"
#include "benn/common/error.hpp"
#include "benn/common/hash.hpp"
#include "benn/common/rng.hpp"
#include "benn/nn/ops.hpp"

namespace benn {
namespace {

void check_spec(const PerturbationSpec& spec) {
  if (!(spec.variance >= 0.0) || spec.variance > 10.0) throw UsageError("perturbation variance must lie in [0, 10]");
  if (spec.trials == 0) throw UsageError("perturbation needs at least one trial");
}

std::vector<WeightLayer*> weight_layers(Network& net) {
  std::vector<WeightLayer*> out;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    if (auto* w = dynamic_cast<WeightLayer*>(&net.layer(i))) out.push_back(w);
  }
  return out;
}

RealTensor outputs(Network& net, const RealTensor& x, bool raw) {
  ForwardContext ctx;
  RealTensor logits = net.forward(x, ctx);
  return raw ? logits : softmax_rows(logits);
}

double mean_sq_change(const RealTensor& a, const RealTensor& b) {
  const std::size_t rows = a.dim(0), cols = a.size() / rows;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = static_cast<double>(a[r * cols + c]) - b[r * cols + c];
      row += d * d;
    }
    total += row;
  }
  return total / static_cast<double>(rows);
}

}  // namespace

Estimate robustness_random(const NetworkConfig& config, const PerturbationSpec& spec, const RealTensor& inputs,
                           std::size_t weight_samples, double weight_std, bool raw_output) {
  check_spec(spec);
  if (weight_samples == 0) throw UsageError("robustness_random: zero weight samples");
  if (inputs.empty()) throw UsageError("robustness_random: no inputs");
  const double noise_std = std::sqrt(spec.variance);
  const std::size_t rows = inputs.dim(0), row_size = inputs.size() / rows;
  std::vector<double> per_sample;

  for (std::size_t j = 0; j < weight_samples; ++j) {
    const std::uint64_t sample_seed = derive_seed(spec.seed, j);
    Network net(config, sample_seed);
    auto layers = weight_layers(net);
    Rng wrng = make_rng(sample_seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto* l : layers) {
      for (float& v : l->weight().value.values()) v = static_cast<float>(weight_std * gauss(wrng));
      ++l->weight().version;
      if (l->has_bias()) {
        for (float& v : l->bias().value.values()) v = 0.0f;
        ++l->bias().version;
      }
    }
    net.calibrate_batchnorm(inputs);
    const RealTensor clean = outputs(net, inputs, raw_output);

    double acc = 0.0;
    if (spec.variance == 0.0) {
      per_sample.push_back(0.0);
      continue;
    }
    for (std::size_t t = 0; t < spec.trials; ++t) {
      const std::uint64_t trial_seed = derive_seed(sample_seed, 1 + t);
      if (spec.target == PerturbTarget::kInput) {
        // Each row's noise is keyed by its content, so the metric does not
        // depend on the order of the inputs.
        RealTensor noisy = inputs;
        for (std::size_t r = 0; r < rows; ++r) {
          float* row = noisy.data() + r * row_size;
          const auto key = fnv1a64(std::as_bytes(std::span<const float>(inputs.data() + r * row_size, row_size)));
          Rng nrng = make_rng(trial_seed, key);
          for (std::size_t i = 0; i < row_size; ++i) row[i] += static_cast<float>(noise_std * gauss(nrng));
        }
        acc += mean_sq_change(outputs(net, noisy, raw_output), clean);
      } else {
        Network noisy = net;
        Rng nrng = make_rng(trial_seed, 0);
        for (auto* l : weight_layers(noisy)) {
          for (float& v : l->weight().value.values()) v += static_cast<float>(noise_std * gauss(nrng));
          ++l->weight().version;
        }
        acc += mean_sq_change(outputs(noisy, inputs, raw_output), clean);
      }
    }
    per_sample.push_back(acc / static_cast<double>(spec.trials));
  }
  return mean_estimate(per_sample);
}

std::vector<double> robustness_trained_samples(const Predictor& predict, const Dataset& data,
                                               const PerturbationSpec& spec) {
  check_spec(spec);
  if (spec.target != PerturbTarget::kInput) {
    throw UsageError("robustness_trained: only input perturbation applies to a trained predictor");
  }
  if (data.size() == 0) throw UsageError("robustness_trained: empty dataset");
  auto error_rate = [&](const RealTensor& x) {
    const auto pred = predict(x);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != data.labels[i];
    return static_cast<double>(wrong) / static_cast<double>(pred.size());
  };
  const double clean = error_rate(data.images);
  const double noise_std = std::sqrt(spec.variance);
  std::vector<double> out;
  for (std::size_t t = 0; t < spec.trials; ++t) {
    Rng rng = make_rng(spec.seed, t);
    std::normal_distribution<double> gauss(0.0, noise_std);
    RealTensor noisy = data.images;
    if (spec.variance > 0.0) {
      for (float& v : noisy.values()) v += static_cast<float>(gauss(rng));
    }
    const double d = error_rate(noisy) - clean;
    out.push_back(d * d);
  }
  return out;
}

Estimate robustness_trained(const Predictor& predict, const Dataset& data, const PerturbationSpec& spec) {
  const auto s = robustness_trained_samples(predict, data, spec);
  return mean_estimate(s);
}

StabilityReport stability_track(std::span<const double> accuracies, std::size_t window) {
  if (window < 2) throw UsageError("stability_track: window must be at least 2");
  if (accuracies.size() < window) {
    throw UsageError("stability_track: need " + std::to_string(window) + " accuracies, got " +
                     std::to_string(accuracies.size()));
  }
  StabilityReport rep;
  rep.window.assign(accuracies.end() - static_cast<std::ptrdiff_t>(window), accuracies.end());
  double mean = 0.0;
  for (double a : rep.window) mean += a;
  mean /= static_cast<double>(window);
  double ss = 0.0;
  for (double a : rep.window) ss += (a - mean) * (a - mean);
  rep.stddev = std::sqrt(ss / static_cast<double>(window - 1));
  return rep;
}

}  // namespace benn
