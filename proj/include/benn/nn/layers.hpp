#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "benn/bitcore/binary_ops.hpp"
#include "benn/common/rng.hpp"
#include "benn/nn/config.hpp"
#include "benn/tensor.hpp"

namespace benn {

enum class Mode { kTrain, kEval };

struct ForwardContext {
  Mode mode = Mode::kEval;
  // Replace sign/quant activations by the clipped identity (the function whose
  // derivative the STE reports). Binary layers then run their float path.
  bool surrogate = false;
  // Keep what backward() needs.
  bool keep_cache = false;
  // Run 1-bit layers through float dot products even when xnor/popcount
  // applies (reference path for export checks).
  bool float_path = false;
  Rng* rng = nullptr;
};

struct Parameter {
  std::string name;
  RealTensor value;
  // Shadow weights of 1-bit / Q-bit layers are kept in [-1, 1].
  bool clip_to_unit = false;
  // Bumped on every in-place update; binary caches compare against it.
  std::uint64_t version = 0;
};

// Packed binary weights w_b = a * sign(w) derived from real shadow weights:
// a[o] = (1/f) * sum_i |w[o, i]| over the f = fan_in weights of filter o.
class ScaledBinaryLayer {
 public:
  ScaledBinaryLayer() = default;
  // weight_shape is [filters, ...]; conv layers pass their geometry.
  ScaledBinaryLayer(std::string name, Shape weight_shape, std::optional<ConvGeometry> conv = std::nullopt);

  Parameter& shadow() { return shadow_; }
  const Parameter& shadow() const { return shadow_; }

  void refresh();
  bool is_fresh() const { return frozen_ || refreshed_version_ == shadow_.version; }
  // Inference-only state loaded from a packed export; shadow weights are
  // absent and refresh() is a no-op.
  void freeze(PackedBitTensor packed, std::vector<float> scale);
  bool frozen() const { return frozen_; }

  std::size_t filters() const { return filters_; }
  std::size_t fan_in() const { return fan_in_; }
  const std::optional<ConvGeometry>& conv() const { return conv_; }
  const PackedBitTensor& packed() const { return packed_; }
  const BitRows& rows() const { return rows_; }
  const std::vector<float>& scale() const { return scale_; }
  // Dense a[o] * sign(w[o, i]), [filters x fan_in].
  const std::vector<float>& effective() const { return effective_; }
  // sign(w[o, i]) as +-1, [filters x fan_in].
  const std::vector<float>& signs() const { return signs_; }

  // d/dw of w_b = a(w) * sign(w), with the STE for sign:
  //   dw_i = b_i / f * sum_j g_j b_j + g_i * a * 1{|w_i| <= 1}
  void accumulate_shadow_grad(std::span<const float> grad_effective);

 private:
  void rebuild_from_packed();

  Parameter shadow_;
  std::optional<ConvGeometry> conv_;
  std::size_t filters_ = 0;
  std::size_t fan_in_ = 0;
  PackedBitTensor packed_;
  BitRows rows_;
  std::vector<float> scale_;
  std::vector<float> effective_;
  std::vector<float> signs_;
  std::uint64_t refreshed_version_ = std::numeric_limits<std::uint64_t>::max();
  bool frozen_ = false;
};

// Linear layers map x [fan_in] -> [filters]; conv layers map x [C x H x W] ->
// [filters x H' x W']. out[o] = a[o] * (xnor/popcount result for filter o).
// Throws UsageError when the layer has not been refreshed since its shadow
// weights last changed.
RealTensor scaled_binary_forward(const ScaledBinaryLayer& layer, const PackedBitTensor& x_binary);

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::unique_ptr<Layer> clone() const = 0;
  // x is [N x in_shape...]; returns [N x out_shape...].
  virtual RealTensor forward(const RealTensor& x, const ForwardContext& ctx) = 0;
  // Accumulates parameter gradients and returns d loss / d input.
  virtual RealTensor backward(const RealTensor& grad_out) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  // Persistent non-trainable tensors (batchnorm running statistics).
  virtual std::vector<std::pair<std::string, RealTensor*>> buffers() { return {}; }
  virtual void reset_parameters(Rng& /*rng*/) {}
};

std::unique_ptr<Layer> make_layer(const NetworkConfig& config, std::size_t index, const Shape& in_shape,
                                  const Shape& out_shape);

// While on, a batchnorm layer in training mode overwrites its running
// statistics with the batch statistics instead of blending them.
void set_batchnorm_calibration(Layer& layer, bool on);

// Layers that own weights (conv / fc).
class WeightLayer : public Layer {
 public:
  WeightLayer(const LayerConfig& cfg, Shape weight_shape, std::optional<ConvGeometry> conv, bool binary_input);

  std::vector<Parameter*> parameters() override;
  void reset_parameters(Rng& rng) override;

  int weight_bits() const { return weight_bits_; }
  bool binary_input() const { return binary_input_; }
  bool has_bias() const { return has_bias_; }
  ScaledBinaryLayer* binary() { return weight_bits_ == 1 ? &binary_ : nullptr; }
  const ScaledBinaryLayer* binary() const { return weight_bits_ == 1 ? &binary_ : nullptr; }
  Parameter& weight() { return weight_bits_ == 1 ? binary_.shadow() : weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& bias() const { return bias_; }
  std::size_t filters() const { return filters_; }
  std::size_t fan_in() const { return fan_in_; }

  // Weights the float path multiplies by, [filters x fan_in].
  std::span<const float> effective_weights();
  // Forward float path: 1-bit layers take the dot product with the signs and
  // multiply by the filter scale afterwards (exact for +-1 inputs, like the
  // xnor path); other layers use effective_weights() and an empty scale.
  std::span<const float> forward_weights();
  std::span<const float> filter_scale() const;
  // Loads inference-only weights: multi-bit layers get `effective` as their
  // weight tensor.
  void freeze_real(std::vector<float> effective);

 protected:
  bool use_packed_path(const ForwardContext& ctx) const {
    return weight_bits_ == 1 && binary_input_ && !ctx.surrogate && !ctx.float_path;
  }
  void accumulate_weight_grad(std::span<const float> grad_effective);

  int weight_bits_;
  bool has_bias_;
  bool binary_input_;
  std::size_t filters_;
  std::size_t fan_in_;
  Parameter weight_;
  ScaledBinaryLayer binary_;
  Parameter bias_;
  std::vector<float> quantized_;
};

}  // namespace benn
