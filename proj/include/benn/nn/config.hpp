#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "benn/tensor.hpp"

namespace benn {

enum class LayerKind {
  kConv,
  kFc,
  kBatchNorm,
  kRelu,
  kHardTanh,
  kSign,
  kQuant,
  kMaxPool,
  kAvgPool,
  kDropout,
};

std::string_view layer_kind_name(LayerKind kind);

// One row of a layer table. Only the fields relevant to `kind` are
// meaningful; the canonical text form prints exactly those.
struct LayerConfig {
  LayerKind kind = LayerKind::kRelu;
  std::size_t depth = 0;  // conv output channels / fc width
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool global = false;    // avgpool over the whole plane
  int weight_bits = 32;   // 1, 2..8, or 32
  bool bias = true;
  double eps = 1e-4;
  double momentum = 0.1;
  int bits = 2;           // quant activation bits
  double p = 0.5;         // dropout probability

  bool has_weights() const { return kind == LayerKind::kConv || kind == LayerKind::kFc; }
  bool operator==(const LayerConfig&) const = default;
};

// Human-readable layer list, one line per layer:
//
//   name toy-mlp
//   input 1x8x8
//   fc width=64 wbits=32 bias=1
//   batchnorm eps=0.0001 momentum=0.1
//   sign
//   conv depth=16 kernel=3 stride=1 pad=1 wbits=1 bias=0
//   quant bits=2
//   maxpool kernel=3 stride=2 pad=1
//   avgpool global
//   dropout p=0.5
//
// '#' starts a comment. Omitted keys take the defaults above (bias defaults
// to 1 for multi-bit weights and 0 for 1-bit weights).
struct NetworkConfig {
  std::string name = "net";
  Shape input;
  std::vector<LayerConfig> layers;

  static NetworkConfig parse(std::string_view text);
  static NetworkConfig load(const std::string& path);
  // Canonical form: every key spelled out, fixed key order, shortest
  // round-trip numbers. parse(to_text()) == *this.
  std::string to_text() const;
  std::uint64_t hash() const;

  bool operator==(const NetworkConfig&) const = default;
};

// Per-example shape entering each layer, plus the final output shape
// (size layers.size() + 1). Throws UsageError naming the layer index.
std::vector<Shape> infer_shapes(const NetworkConfig& config);
std::size_t output_classes(const NetworkConfig& config);

// Bits of the activation consumed by weight layer `index`: 1 after sign, Q
// after quant, 32 otherwise.
int input_activation_bits(const NetworkConfig& config, std::size_t index);

// Weak-BNN variants derived from a full-precision layer table.
enum class Profile {
  kSemi,                 // SB: first and last weight layers 32-bit
  kAll,                  // AB: everything 1-bit, input binarized too
  kWeightQuantized,      // WQB: Q-bit weights, 1-bit activations
  kActivationQuantized,  // AQB: 1-bit weights, Q-bit activations
  kExceptInput,          // IB: 1-bit everywhere except the raw input
  kReal,                 // strip all binarization
};

enum class Compression { kNone, kTiny, kNano };

Profile parse_profile(std::string_view name);
Compression parse_compression(std::string_view name);

// Removes existing sign/quant layers, then inserts the activation quantizer
// directly before each weight layer and sets its weight precision. A relu
// feeding a quantizer (possibly through dropout or pooling) is dropped.
NetworkConfig apply_profile(const NetworkConfig& config, Profile profile, int q_bits = 2);
// Scales every hidden weight layer's width: Tiny x0.5, Nano x0.1. The last
// weight layer keeps its width (class count).
NetworkConfig compress(const NetworkConfig& config, Compression level);

}  // namespace benn
