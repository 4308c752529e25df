#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "benn/dataset.hpp"
#include "benn/nn/network.hpp"
#include "benn/nn/optimizer.hpp"

namespace benn {

// One optimizer step on a mini-batch. `factors` (empty = all ones) scale
// each example's loss term. Throws NumericalError on a non-finite loss.
LossResult backward_and_step(Network& net, const RealTensor& x, std::span<const int> labels,
                             std::span<const double> factors, Optimizer& opt, Rng& rng);

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  // Stop when the epoch loss has not improved by 1e-4 for this many epochs
  // (0 disables).
  std::size_t early_stop_patience = 0;
  // Keep eval-mode test probabilities after every epoch.
  bool record_test_probs = false;
};

struct EpochRecord {
  double loss = 0.0;
  double train_accuracy = 0.0;  // eval mode, on the training rows
  double test_accuracy = 0.0;   // NaN without a test set
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<RealTensor> test_probs;
};

double accuracy(std::span<const int> predicted, std::span<const int> labels);

// Trains on `train` (rows may repeat, e.g. a bootstrap resample) with
// optional per-row loss factors.
TrainHistory train_network(Network& net, const Dataset& train, std::span<const double> factors,
                           const Dataset* test, const TrainOptions& options);

}  // namespace benn
