#include "benn/nn/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "benn/common/error.hpp"

namespace benn {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw UsageError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void Optimizer::step(const std::vector<Parameter*>& params) {
  if (slots_.empty()) slots_.resize(params.size());
  if (slots_.size() != params.size()) throw UsageError("optimizer: parameter list changed between steps");
  ++t_;
  const double lr = config_.lr;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.value.has_grad()) continue;
    auto w = p.value.values();
    auto g = p.value.grad();
    Slot& s = slots_[k];
    if (s.m.size() != w.size()) s.m.assign(w.size(), 0.0f);
    if (lr == 0.0) continue;
    if (config_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + config_.weight_decay * w[i];
        s.m[i] = static_cast<float>(config_.momentum * s.m[i] + gi);
        w[i] = static_cast<float>(w[i] - lr * s.m[i]);
      }
    } else {
      if (s.v.size() != w.size()) s.v.assign(w.size(), 0.0f);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + config_.weight_decay * w[i];
        s.m[i] = static_cast<float>(config_.beta1 * s.m[i] + (1.0 - config_.beta1) * gi);
        s.v[i] = static_cast<float>(config_.beta2 * s.v[i] + (1.0 - config_.beta2) * gi * gi);
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + config_.eps));
      }
    }
    if (config_.clip_shadow && p.clip_to_unit) {
      for (auto& x : w) x = std::clamp(x, -1.0f, 1.0f);
    }
    ++p.version;
  }
}

}  // namespace benn
