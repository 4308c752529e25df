#pragma once

#include <string_view>
#include <vector>

#include "benn/nn/layers.hpp"

namespace benn {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Clip shadow weights of 1-bit / Q-bit layers to [-1, 1] after each step.
  bool clip_shadow = true;
};

// State is positional: step() must always see the same parameter list.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  void step(const std::vector<Parameter*>& params);
  void reset() { slots_.clear(); t_ = 0; }

 private:
  struct Slot {
    std::vector<float> m;
    std::vector<float> v;
  };
  OptimizerConfig config_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

}  // namespace benn
