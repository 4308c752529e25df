#include <cmath>

#include "benn/common/error.hpp"
#include "benn/nn/layers.hpp"
#include "benn/nn/ops.hpp"

namespace benn {

ScaledBinaryLayer::ScaledBinaryLayer(std::string name, Shape weight_shape, std::optional<ConvGeometry> conv)
    : conv_(conv) {
  shadow_.name = std::move(name);
  shadow_.value = RealTensor(weight_shape);
  shadow_.value.enable_grad();
  shadow_.clip_to_unit = true;
  filters_ = weight_shape.at(0);
  fan_in_ = filters_ == 0 ? 0 : numel(weight_shape) / filters_;
  if (conv_ && conv_->patch_bits() != fan_in_) throw UsageError("ScaledBinaryLayer: geometry/fan-in mismatch");
}

void ScaledBinaryLayer::refresh() {
  if (frozen_) return;
  const auto w = shadow_.value.values();
  packed_ = pack(shadow_.value);
  scale_.assign(filters_, 0.0f);
  for (std::size_t o = 0; o < filters_; ++o) {
    double l1 = 0.0;
    for (std::size_t i = 0; i < fan_in_; ++i) l1 += std::abs(static_cast<double>(w[o * fan_in_ + i]));
    scale_[o] = static_cast<float>(l1 / static_cast<double>(fan_in_));
  }
  rebuild_from_packed();
  refreshed_version_ = shadow_.version;
}

void ScaledBinaryLayer::freeze(PackedBitTensor packed, std::vector<float> scale) {
  if (packed.shape() != shadow_.value.shape() || scale.size() != filters_) {
    throw DataError("binary layer " + shadow_.name + ": packed weights do not match layer shape");
  }
  packed_ = std::move(packed);
  scale_ = std::move(scale);
  shadow_.value = RealTensor();
  frozen_ = true;
  rebuild_from_packed();
}

void ScaledBinaryLayer::rebuild_from_packed() {
  rows_ = BitRows::from_tensor(packed_);
  effective_.resize(filters_ * fan_in_);
  signs_.resize(filters_ * fan_in_);
  for (std::size_t o = 0; o < filters_; ++o) {
    for (std::size_t i = 0; i < fan_in_; ++i) {
      const bool bit = packed_.bit(o * fan_in_ + i);
      effective_[o * fan_in_ + i] = bit ? scale_[o] : -scale_[o];
      signs_[o * fan_in_ + i] = bit ? 1.0f : -1.0f;
    }
  }
}

void ScaledBinaryLayer::accumulate_shadow_grad(std::span<const float> g) {
  if (frozen_) throw UsageError("binary layer " + shadow_.name + " is frozen (inference export)");
  if (!shadow_.value.has_grad()) shadow_.value.enable_grad();
  auto w = shadow_.value.values();
  auto dw = shadow_.value.grad();
  const double inv_f = 1.0 / static_cast<double>(fan_in_);
  for (std::size_t o = 0; o < filters_; ++o) {
    const std::size_t base = o * fan_in_;
    double gb = 0.0;
    for (std::size_t i = 0; i < fan_in_; ++i) gb += g[base + i] * (packed_.bit(base + i) ? 1.0 : -1.0);
    const double a = scale_[o];
    for (std::size_t i = 0; i < fan_in_; ++i) {
      const double b = packed_.bit(base + i) ? 1.0 : -1.0;
      const double ste = std::abs(w[base + i]) <= 1.0f ? 1.0 : 0.0;
      dw[base + i] += static_cast<float>(b * inv_f * gb + g[base + i] * a * ste);
    }
  }
}

RealTensor scaled_binary_forward(const ScaledBinaryLayer& layer, const PackedBitTensor& x) {
  if (!layer.is_fresh()) {
    throw UsageError("scaled_binary_forward: layer " + layer.shadow().name +
                     " is stale (shadow weights changed since the last refresh)");
  }
  const auto& scale = layer.scale();
  if (const auto& g = layer.conv()) {
    if (x.bit_len() != g->channels * g->height * g->width) throw UsageError("scaled_binary_forward: input size");
    const std::size_t positions = g->out_h * g->out_w;
    std::vector<std::int32_t> ints(layer.filters() * positions);
    binary_conv(x, 0, *g, layer.rows(), ints);
    RealTensor out({layer.filters(), g->out_h, g->out_w});
    for (std::size_t f = 0; f < layer.filters(); ++f) {
      for (std::size_t p = 0; p < positions; ++p) {
        out[f * positions + p] = scale[f] * static_cast<float>(ints[f * positions + p]);
      }
    }
    return out;
  }
  if (x.bit_len() != layer.fan_in()) throw UsageError("scaled_binary_forward: input has wrong length");
  BitRows xr = BitRows::from_tensor(PackedBitTensor::from_words({1, x.bit_len()}, {x.words().begin(), x.words().end()}));
  std::vector<std::int32_t> ints(layer.filters());
  binary_gemm(layer.rows(), xr, ints);
  RealTensor out({layer.filters()});
  for (std::size_t o = 0; o < layer.filters(); ++o) out[o] = scale[o] * static_cast<float>(ints[o]);
  return out;
}

WeightLayer::WeightLayer(const LayerConfig& cfg, Shape weight_shape, std::optional<ConvGeometry> conv,
                         bool binary_input)
    : weight_bits_(cfg.weight_bits), has_bias_(cfg.bias), binary_input_(binary_input) {
  filters_ = weight_shape.at(0);
  fan_in_ = numel(weight_shape) / filters_;
  if (weight_bits_ == 1) {
    binary_ = ScaledBinaryLayer("weight", weight_shape, conv);
  } else {
    weight_.name = "weight";
    weight_.value = RealTensor(weight_shape);
    weight_.value.enable_grad();
    weight_.clip_to_unit = weight_bits_ != 32;
  }
  if (has_bias_) {
    bias_.name = "bias";
    bias_.value = RealTensor({filters_});
    bias_.value.enable_grad();
  }
}

std::vector<Parameter*> WeightLayer::parameters() {
  std::vector<Parameter*> out;
  if (weight_bits_ == 1) {
    if (!binary_.frozen()) out.push_back(&binary_.shadow());
  } else {
    out.push_back(&weight_);
  }
  if (has_bias_) out.push_back(&bias_);
  return out;
}

void WeightLayer::reset_parameters(Rng& rng) {
  // Kaiming-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in_));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Parameter& w = weight();
  for (auto& v : w.value.values()) {
    v = dist(rng);
    if (w.clip_to_unit) v = std::clamp(v, -1.0f, 1.0f);
  }
  ++w.version;
  if (has_bias_) {
    std::fill(bias_.value.values().begin(), bias_.value.values().end(), 0.0f);
    ++bias_.version;
  }
}

std::span<const float> WeightLayer::effective_weights() {
  if (weight_bits_ == 1) {
    if (!binary_.is_fresh()) binary_.refresh();
    return binary_.effective();
  }
  if (weight_bits_ == 32) return weight_.value.values();
  const auto w = weight_.value.values();
  quantized_.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) quantized_[i] = quantize_value(w[i], weight_bits_);
  return quantized_;
}

std::span<const float> WeightLayer::forward_weights() {
  if (weight_bits_ != 1) return effective_weights();
  if (!binary_.is_fresh()) binary_.refresh();
  return binary_.signs();
}

std::span<const float> WeightLayer::filter_scale() const {
  if (weight_bits_ != 1) return {};
  return binary_.scale();
}

void WeightLayer::freeze_real(std::vector<float> effective) {
  if (weight_bits_ == 1) throw UsageError("freeze_real on a 1-bit layer");
  if (effective.size() != weight_.value.size()) throw DataError("layer weights do not match layer shape");
  weight_.value = RealTensor(weight_.value.shape(), std::move(effective));
}

void WeightLayer::accumulate_weight_grad(std::span<const float> g) {
  if (weight_bits_ == 1) {
    binary_.accumulate_shadow_grad(g);
    return;
  }
  auto& w = weight_.value;
  if (!w.has_grad()) w.enable_grad();
  auto dw = w.grad();
  if (weight_bits_ == 32) {
    for (std::size_t i = 0; i < g.size(); ++i) dw[i] += g[i];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) dw[i] += std::abs(w[i]) <= 1.0f ? g[i] : 0.0f;
  }
}

}  // namespace benn
