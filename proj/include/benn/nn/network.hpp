#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "benn/nn/config.hpp"
#include "benn/nn/layers.hpp"
#include "benn/nn/ops.hpp"

namespace benn {

struct NamedTensor {
  std::string name;  // "<layer index>.<tensor name>"
  RealTensor* tensor;
};

class Network {
 public:
  Network() = default;
  // Builds the layer stack and initializes weights from `seed`.
  Network(NetworkConfig config, std::uint64_t seed);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkConfig& config() const { return config_; }
  const std::vector<Shape>& shapes() const { return shapes_; }
  std::size_t num_classes() const { return shapes_.back()[0]; }
  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

  // Logits [N x C]. Input must be [N x input shape].
  RealTensor forward(const RealTensor& x, const ForwardContext& ctx);
  // Runs layers [first, end) on an activation that enters layer `first`.
  RealTensor forward_from(std::size_t first, const RealTensor& x, const ForwardContext& ctx);
  // Eval-mode softmax probabilities.
  RealTensor predict_proba(const RealTensor& x, std::size_t batch_size = 256);
  std::vector<int> predict(const RealTensor& x, std::size_t batch_size = 256);

  // Backpropagates d loss / d logits through the cached forward. Returns
  // d loss / d input.
  RealTensor backward(const RealTensor& grad_logits);

  std::vector<Parameter*> parameters();
  // Everything a checkpoint stores: parameters and buffers, in layer order.
  std::vector<NamedTensor> state();
  void zero_grad();
  // Re-estimates batchnorm running statistics from one batch (train-mode
  // statistics, no parameter updates).
  void calibrate_batchnorm(const RealTensor& x);

 private:
  void build();

  NetworkConfig config_;
  std::vector<Shape> shapes_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace benn
