#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "benn/bitcore/packed_bit_tensor.hpp"
#include "benn/common/error.hpp"
#include "benn/nn/config.hpp"
#include "benn/nn/layers.hpp"
#include "benn/nn/ops.hpp"
#include "doctest.h"

using namespace benn;

namespace {

RealTensor random_tensor(Shape shape, std::mt19937_64& rng, float scale = 1.0f) {
  RealTensor t(std::move(shape));
  std::normal_distribution<float> n(0.0f, scale);
  for (auto& v : t.values()) v = n(rng);
  return t;
}

}  // namespace

TEST_CASE("binarize_forward") {
  CHECK(binarize_forward(RealTensor({3}, {0.3f, -0.7f, 0.0f})).values()[0] == 1.0f);
  const auto b = binarize_forward(RealTensor({3}, {0.3f, -0.7f, 0.0f}));
  CHECK(std::vector<float>(b.values().begin(), b.values().end()) == std::vector<float>{1, -1, 1});
  const auto neg = binarize_forward(RealTensor({5}, -0.25f));
  for (float v : neg.values()) CHECK(v == -1.0f);

  std::mt19937_64 rng(4);
  const auto x = random_tensor({7, 13}, rng);
  CHECK(binarize_forward(x) == unpack(pack(x)));

  RealTensor bad({2}, {1.0f, std::nanf("")});
  CHECK_THROWS_AS(binarize_forward(bad), NumericalError);
}

TEST_CASE("ste_backward passes on the closed interval") {
  const auto g = ste_backward(RealTensor({3}, 1.0f), RealTensor({3}, {0.5f, 2.0f, -1.0f}));
  CHECK(std::vector<float>(g.values().begin(), g.values().end()) == std::vector<float>{1, 0, 1});
  std::mt19937_64 rng(5);
  const auto up = random_tensor({10}, rng);
  CHECK(ste_backward(up, RealTensor({10}, 0.0f)) == up);
  CHECK_THROWS_AS(ste_backward(RealTensor({3}), RealTensor({4})), UsageError);
}

TEST_CASE("quantize_k_bit") {
  CHECK(quantize_value(0.0f, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
  CHECK(quantize_value(-5.0f, 2) == -1.0f);
  CHECK(quantize_value(5.0f, 2) == 1.0f);
  std::mt19937_64 rng(6);
  for (int k = 2; k <= 8; ++k) {
    const auto x = random_tensor({500}, rng, 0.8f);
    const auto q = quantize_k_bit(x, k);
    CHECK(quantize_k_bit(q, k) == q);
    const double levels = std::pow(2.0, k) - 1;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double c = std::clamp(x[i], -1.0f, 1.0f);
      CHECK(std::abs(q[i] - c) <= 1.0 / levels + 1e-6);
      // q is one of the 2^k levels.
      const double step = (q[i] + 1.0) / 2.0 * levels;
      CHECK(std::abs(step - std::round(step)) < 1e-4);
    }
  }
  const auto x8 = random_tensor({1000}, rng, 0.6f);
  const auto q8 = quantize_k_bit(x8, 8);
  for (std::size_t i = 0; i < x8.size(); ++i) {
    CHECK(std::abs(q8[i] - std::clamp(x8[i], -1.0f, 1.0f)) <= 1.0 / 255.0 + 1e-7);
  }
  CHECK_THROWS_AS(quantize_k_bit(x8, 1), UsageError);
  CHECK_THROWS_AS(quantize_k_bit(x8, 9), UsageError);
}

TEST_CASE("softmax cross-entropy with per-example factors") {
  RealTensor logits({2, 3}, {1.0f, 2.0f, 0.5f, 0.0f, 0.0f, 0.0f});
  const std::vector<int> labels{1, 2};
  const auto plain = softmax_cross_entropy(logits, labels);
  const std::vector<double> ones{1.0, 1.0};
  const auto weighted = softmax_cross_entropy(logits, labels, ones);
  CHECK(plain.loss == weighted.loss);
  CHECK(plain.grad == weighted.grad);
  const double e0 = std::exp(1.0), e1 = std::exp(2.0), e2 = std::exp(0.5);
  const double ce0 = -std::log(e1 / (e0 + e1 + e2));
  const double ce1 = std::log(3.0);
  CHECK(plain.loss == doctest::Approx((ce0 + ce1) / 2).epsilon(1e-6));
  const std::vector<double> f{2.0, 0.0};
  const auto w = softmax_cross_entropy(logits, labels, f);
  CHECK(w.loss == doctest::Approx(ce0).epsilon(1e-6));
  for (int c = 0; c < 3; ++c) CHECK(w.grad[3 + c] == 0.0f);
  CHECK(argmax_rows(RealTensor({1, 3}, {0.5f, 0.5f, 0.1f}))[0] == 0);
}

TEST_CASE("scaled binary layer refresh and forward") {
  ScaledBinaryLayer layer("w", {1, 3});
  auto w = layer.shadow().value.values();
  w[0] = 0.5f;
  w[1] = -1.5f;
  w[2] = 1.0f;
  layer.refresh();
  CHECK(layer.scale()[0] == doctest::Approx(1.0f));
  const auto out = scaled_binary_forward(layer, pack(RealTensor({3}, 1.0f)));
  CHECK(out[0] == doctest::Approx(1.0f));

  // Shadow weights moved: the layer is stale until refreshed.
  ++layer.shadow().version;
  CHECK_THROWS_AS(scaled_binary_forward(layer, pack(RealTensor({3}, 1.0f))), UsageError);

  ScaledBinaryLayer flat("w", {2, 50});
  for (auto& v : flat.shadow().value.values()) v = 0.25f;
  flat.refresh();
  const auto o = scaled_binary_forward(flat, pack(RealTensor({50}, 1.0f)));
  CHECK(o[0] == doctest::Approx(0.25f * 50));
  CHECK(o[1] == doctest::Approx(0.25f * 50));
}

TEST_CASE("scaled binary forward equals the dense a * sign(w) computation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t filters = 1 + rng() % 9, fan_in = 1 + rng() % 200;
    ScaledBinaryLayer layer("w", {filters, fan_in});
    layer.shadow().value = random_tensor({filters, fan_in}, rng, 0.5f);
    layer.refresh();
    const auto xs = oracle::random_signs(fan_in, rng);
    const auto out = scaled_binary_forward(layer, pack(oracle::to_float(xs), {fan_in}));
    const auto w = layer.shadow().value.values();
    for (std::size_t o = 0; o < filters; ++o) {
      double a = 0.0;
      for (std::size_t i = 0; i < fan_in; ++i) a += std::abs(w[o * fan_in + i]);
      a /= static_cast<double>(fan_in);
      CHECK(layer.scale()[o] == doctest::Approx(a).epsilon(1e-6));
      double dense = 0.0;
      for (std::size_t i = 0; i < fan_in; ++i) dense += a * (w[o * fan_in + i] >= 0 ? 1.0 : -1.0) * xs[i];
      CHECK(out[o] == doctest::Approx(dense).epsilon(1e-5).scale(a));
    }
    CHECK(layer.packed() == pack(layer.shadow().value));
  }

  // Convolution: 3x6x6 input, 4 filters 3x3, stride 1, pad 1.
  const auto g = conv_geometry(3, 6, 6, 3, 1, 1);
  ScaledBinaryLayer conv("w", {4, 3, 3, 3}, g);
  conv.shadow().value = random_tensor({4, 3, 3, 3}, rng, 0.5f);
  conv.refresh();
  const auto xs = oracle::random_signs(3 * 36, rng);
  const auto out = scaled_binary_forward(conv, pack(oracle::to_float(xs), {3, 6, 6}));
  std::vector<int> ws(4 * 27);
  for (std::size_t i = 0; i < ws.size(); ++i) ws[i] = conv.shadow().value[i] >= 0 ? 1 : -1;
  std::size_t oh = 0, ow = 0;
  const auto ints = oracle::dense_conv(xs, 3, 6, 6, ws, 4, 3, 1, 1, oh, ow);
  REQUIRE(out.shape() == Shape{4, oh, ow});
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t p = 0; p < oh * ow; ++p)
      CHECK(out[f * oh * ow + p] == doctest::Approx(conv.scale()[f] * ints[f * oh * ow + p]).epsilon(1e-6));
}

TEST_CASE("network config text round trip") {
  const auto cfg = NetworkConfig::parse(R"(name toy
input 1x8x8
conv depth=4 kernel=3 stride=1 pad=1
batchnorm
sign
conv depth=8 kernel=3 stride=2 pad=1 wbits=1
maxpool kernel=2 stride=2
quant bits=3
fc width=16 wbits=4
relu
dropout p=0.25
fc width=3
)");
  CHECK(cfg.layers.size() == 10);
  CHECK(cfg.layers[3].bias == false);
  CHECK(cfg.layers[6].bias == true);
  CHECK(NetworkConfig::parse(cfg.to_text()) == cfg);
  CHECK(NetworkConfig::parse(cfg.to_text()).to_text() == cfg.to_text());
  const auto shapes = infer_shapes(cfg);
  CHECK(shapes[4] == Shape{8, 4, 4});
  CHECK(shapes.back() == Shape{3});
  CHECK(input_activation_bits(cfg, 3) == 1);
  CHECK(input_activation_bits(cfg, 6) == 3);
  CHECK(input_activation_bits(cfg, 0) == 32);
  CHECK_THROWS_AS(NetworkConfig::parse("input 4\nfc width=2 wbits=33\n"), UsageError);
  CHECK_THROWS_AS(infer_shapes(NetworkConfig::parse("input 4\nconv depth=2 kernel=3\n")), UsageError);
}

TEST_CASE("weak-BNN profiles and compression") {
  const auto base = NetworkConfig::parse(R"(input 3x8x8
conv depth=20 kernel=3 pad=1
batchnorm
relu
conv depth=40 kernel=3 pad=1
batchnorm
relu
avgpool global
fc width=10
)");
  const auto sb = apply_profile(base, Profile::kSemi);
  std::vector<int> wb;
  for (const auto& l : sb.layers)
    if (l.has_weights()) wb.push_back(l.weight_bits);
  CHECK(wb == std::vector<int>{32, 1, 32});
  const auto ab = apply_profile(base, Profile::kAll);
  CHECK(ab.layers.front().kind == LayerKind::kSign);
  for (const auto& l : ab.layers)
    if (l.has_weights()) CHECK(l.weight_bits == 1);
  const auto tiny = compress(base, Compression::kTiny);
  CHECK(tiny.layers[0].depth == 10);
  CHECK(tiny.layers[3].depth == 20);
  CHECK(tiny.layers.back().depth == 10);
  const auto nano = compress(base, Compression::kNano);
  CHECK(nano.layers[0].depth == 2);
  CHECK(nano.layers.back().depth == 10);
}

TEST_CASE("shipped layer tables parse and have consistent shapes") {
  const std::string dir = BENN_SOURCE_DIR "/configs/";
  CHECK(output_classes(NetworkConfig::load(dir + "nin.cfg")) == 1000);
  CHECK(output_classes(NetworkConfig::load(dir + "alexnet.cfg")) == 1000);
  CHECK(output_classes(NetworkConfig::load(dir + "resnet18.cfg")) == 1000);
  CHECK(output_classes(NetworkConfig::load(dir + "toy_cnn.cfg")) == 4);
  CHECK(output_classes(NetworkConfig::load(dir + "toy_mlp.cfg")) == 2);
  const auto nin = NetworkConfig::load(dir + "nin.cfg");
  CHECK(nin.layers.size() == 29);
  const auto shapes = infer_shapes(nin);
  CHECK(shapes[28] == Shape{192, 1, 1});
  for (auto p : {Profile::kSemi, Profile::kAll, Profile::kActivationQuantized}) {
    CHECK_NOTHROW(infer_shapes(compress(apply_profile(nin, p), Compression::kTiny)));
  }
}
