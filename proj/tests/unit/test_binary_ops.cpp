#include <random>

#include "../oracles.hpp"
#include "benn/bitcore/binary_ops.hpp"
#include "benn/common/error.hpp"
#include "doctest.h"

using namespace benn;

namespace {

PackedBitTensor packed_from(const std::vector<int>& v, Shape shape) {
  return pack(oracle::to_float(v), std::move(shape));
}

}  // namespace

TEST_CASE("xnor_dot of identical and antipodal vectors") {
  std::mt19937_64 rng(1);
  const auto a = oracle::random_signs(64, rng);
  std::vector<int> na(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) na[i] = -a[i];
  CHECK(xnor_dot(packed_from(a, {64}), packed_from(a, {64})) == 64);
  CHECK(xnor_dot(packed_from(a, {64}), packed_from(na, {64})) == -64);
}

TEST_CASE("xnor_dot matches the dense oracle, exhaustively for n <= 12") {
  for (std::size_t n = 1; n <= 12; ++n) {
    const std::size_t combos = std::size_t{1} << n;
    // Fix b to a few patterns and sweep all a; symmetry covers the rest.
    for (std::size_t bm : {std::size_t{0}, combos - 1, combos / 3, combos / 2 + 1}) {
      std::vector<int> b(n);
      for (std::size_t i = 0; i < n; ++i) b[i] = (bm >> i) & 1 ? 1 : -1;
      const auto pb = packed_from(b, {n});
      for (std::size_t am = 0; am < combos; ++am) {
        std::vector<int> a(n);
        for (std::size_t i = 0; i < n; ++i) a[i] = (am >> i) & 1 ? 1 : -1;
        const auto pa = packed_from(a, {n});
        const auto d = xnor_dot(pa, pb);
        REQUIRE(d == oracle::dense_dot(a, b));
        REQUIRE(d == xnor_dot(pb, pa));
        REQUIRE((d + static_cast<std::int64_t>(n)) % 2 == 0);
      }
    }
  }
}

TEST_CASE("xnor_dot random n = 257 and self-dot") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_signs(257, rng);
    const auto b = oracle::random_signs(257, rng);
    CHECK(xnor_dot(packed_from(a, {257}), packed_from(b, {257})) == oracle::dense_dot(a, b));
    CHECK(xnor_dot(packed_from(a, {257}), packed_from(a, {257})) == 257);
  }
}

TEST_CASE("xnor_dot ignores garbage in padding bits") {
  std::mt19937_64 rng(3);
  const auto a = oracle::random_signs(100, rng);
  const auto b = oracle::random_signs(100, rng);
  auto pa = packed_from(a, {100});
  auto pb = packed_from(b, {100});
  const auto clean = xnor_dot(pa, pb);
  pa.mutable_words()[1] |= ~pa.tail_mask();
  CHECK(xnor_dot(pa, pb) == clean);
  pa.canonicalize();
  CHECK(xnor_dot(pa, pb) == clean);
}

TEST_CASE("xnor_dot length mismatch") {
  CHECK_THROWS_AS(xnor_dot(PackedBitTensor({3}), PackedBitTensor({4})), UsageError);
}

TEST_CASE("binary_gemm 1x1xn equal rows") {
  std::mt19937_64 rng(4);
  const auto a = oracle::random_signs(77, rng);
  const auto r = binary_gemm(packed_from(a, {1, 77}), packed_from(a, {1, 77}));
  CHECK(r.shape == Shape{1, 1});
  CHECK(r.values[0] == 77);
}

TEST_CASE("binary_gemm identity pattern 4x4") {
  // W row o is +1 only at position o; X = W. Hand table: diagonal 4, else 0.
  std::vector<int> w(16, -1);
  for (int i = 0; i < 4; ++i) w[static_cast<std::size_t>(i * 5)] = 1;
  const auto r = binary_gemm(packed_from(w, {4, 4}), packed_from(w, {4, 4}));
  const std::vector<std::int32_t> expected = {4, 0, 0, 0, 0, 4, 0, 0, 0, 0, 4, 0, 0, 0, 0, 4};
  CHECK(r.values == expected);
}

TEST_CASE("binary_gemm random 8x100 by 3x100") {
  std::mt19937_64 rng(5);
  const auto w = oracle::random_signs(800, rng);
  const auto x = oracle::random_signs(300, rng);
  const auto r = binary_gemm(packed_from(w, {8, 100}), packed_from(x, {3, 100}));
  CHECK(r.shape == Shape{3, 8});
  CHECK(r.values == oracle::dense_gemm(w, 8, x, 3, 100));
}

TEST_CASE("binary_gemm dim mismatch") {
  CHECK_THROWS_AS(binary_gemm(PackedBitTensor({2, 5}), PackedBitTensor({2, 6})), UsageError);
}

TEST_CASE("im2col_binary_conv all +1 / all -1 kernels") {
  const auto input = pack(RealTensor({1, 3, 3}, 1.0f));
  CHECK(im2col_binary_conv(input, pack(RealTensor({1, 1, 3, 3}, 1.0f)), 1, 0).values ==
        std::vector<std::int32_t>{9});
  CHECK(im2col_binary_conv(input, pack(RealTensor({1, 1, 3, 3}, -1.0f)), 1, 0).values ==
        std::vector<std::int32_t>{-9});
}

TEST_CASE("im2col_binary_conv padding reads as -1") {
  // All +1 input and kernel, pad 1: the corner output sees 4 inside and 5
  // padding cells -> 4 - 5 = -1.
  const auto r = im2col_binary_conv(pack(RealTensor({1, 3, 3}, 1.0f)), pack(RealTensor({1, 1, 3, 3}, 1.0f)), 1, 1);
  CHECK(r.shape == Shape{1, 3, 3});
  CHECK(r.values[0] == -1);
  CHECK(r.values[4] == 9);
}

TEST_CASE("im2col_binary_conv random 3x8x8, 4 kernels 3x3, stride 2, pad 1") {
  std::mt19937_64 rng(6);
  const auto in = oracle::random_signs(3 * 8 * 8, rng);
  const auto ker = oracle::random_signs(4 * 3 * 3 * 3, rng);
  std::size_t oh = 0, ow = 0;
  const auto expected = oracle::dense_conv(in, 3, 8, 8, ker, 4, 3, 2, 1, oh, ow);
  const auto r = im2col_binary_conv(packed_from(in, {3, 8, 8}), packed_from(ker, {4, 3, 3, 3}), 2, 1);
  CHECK(r.shape == Shape{4, 4, 4});
  CHECK(r.values == expected);
}

TEST_CASE("im2col_binary_conv rejects oversized kernels") {
  CHECK_THROWS_AS(im2col_binary_conv(PackedBitTensor({1, 2, 2}), PackedBitTensor({1, 1, 5, 5}), 1, 1), UsageError);
}
