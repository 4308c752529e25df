#include "benn/nn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "benn/common/error.hpp"

namespace benn {

LossResult backward_and_step(Network& net, const RealTensor& x, std::span<const int> labels,
                             std::span<const double> factors, Optimizer& opt, Rng& rng) {
  ForwardContext ctx;
  ctx.mode = Mode::kTrain;
  ctx.keep_cache = true;
  ctx.rng = &rng;
  net.zero_grad();
  const RealTensor logits = net.forward(x, ctx);
  LossResult r = softmax_cross_entropy(logits, labels, factors);
  if (!std::isfinite(r.loss)) {
    throw NumericalError("training loss is " + std::to_string(r.loss) + " (batch of " +
                         std::to_string(labels.size()) + ")");
  }
  net.backward(r.grad);
  opt.step(net.parameters());
  return r;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (labels.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

TrainHistory train_network(Network& net, const Dataset& train, std::span<const double> factors,
                           const Dataset* test, const TrainOptions& options) {
  if (train.size() == 0) throw UsageError("train_network: empty training set");
  if (!factors.empty() && factors.size() != train.size()) throw UsageError("train_network: factor count mismatch");
  if (options.batch_size == 0) throw UsageError("train_network: batch size must be positive");
  if (train.example_shape() != net.config().input) {
    throw DataError("dataset examples are " + shape_string(train.example_shape()) + " but the network expects " +
                    shape_string(net.config().input));
  }
  Optimizer opt(options.optimizer);
  Rng rng = make_rng(options.seed, 1);
  TrainHistory history;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> batch_factors;
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += options.batch_size) {
      const std::size_t e = std::min(order.size(), b + options.batch_size);
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      const Dataset batch = train.gather(idx);
      batch_factors.clear();
      for (auto i : idx) {
        if (!factors.empty()) batch_factors.push_back(factors[i]);
      }
      const LossResult r = backward_and_step(net, batch.images, batch.labels, batch_factors, opt, rng);
      loss_sum += r.loss * static_cast<double>(e - b);
    }
    EpochRecord rec;
    rec.loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = accuracy(net.predict(train.images), train.labels);
    rec.test_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (test) {
      RealTensor probs = net.predict_proba(test->images);
      rec.test_accuracy = accuracy(argmax_rows(probs), test->labels);
      if (options.record_test_probs) history.test_probs.push_back(std::move(probs));
    }
    history.epochs.push_back(rec);
    if (options.early_stop_patience > 0) {
      if (rec.loss < best - 1e-4) {
        best = rec.loss;
        stale = 0;
      } else if (++stale >= options.early_stop_patience) {
        break;
      }
    }
  }
  return history;
}

}  // namespace benn
