#include <random>

#include "../oracles.hpp"
#include "benn/bitcore/packed_bit_tensor.hpp"
#include "benn/common/error.hpp"
#include "doctest.h"

using namespace benn;

TEST_CASE("pack encodes index i at bit i, +1 as 1") {
  const auto t = pack(RealTensor({4}, {1.0f, -1.0f, -1.0f, 1.0f}));
  REQUIRE(t.word_count() == 1);
  CHECK(t.words()[0] == 0b1001u);
  CHECK(t.bit_len() == 4);
  CHECK(t.is_canonical());
}

TEST_CASE("Sign(0) is +1 and padding stays zero") {
  const auto t = pack(RealTensor({70}, 0.0f));
  REQUIRE(t.word_count() == 2);
  CHECK(t.words()[0] == ~std::uint64_t{0});
  CHECK(t.words()[1] == 0b111111u);
  CHECK(t.is_canonical());
}

TEST_CASE("pack rejects non-finite input and names the index") {
  RealTensor x({5}, 1.0f);
  x[3] = std::nanf("");
  try {
    pack(x);
    FAIL("expected an error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("index 3") != std::string::npos);
  }
}

TEST_CASE("unpack of empty tensor") {
  const auto t = pack(RealTensor({0}));
  CHECK(t.word_count() == 0);
  CHECK(unpack(t).size() == 0);
}

TEST_CASE("pack/unpack roundtrip property") {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> normal;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 1000;
    RealTensor x({n});
    for (auto& v : x.values()) v = normal(rng);
    const auto packed = pack(x);
    const auto back = unpack(packed);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(back[i] == (x[i] >= 0.0f ? 1.0f : -1.0f));
    CHECK(pack(back) == packed);
  }
}

TEST_CASE("corrupted padding is detected and canonicalize repairs it") {
  auto t = pack(RealTensor({70}, -1.0f));
  t.mutable_words()[1] |= std::uint64_t{1} << 40;
  CHECK_FALSE(t.is_canonical());
  std::vector<std::uint64_t> raw(t.words().begin(), t.words().end());
  CHECK_THROWS_AS(PackedBitTensor::from_words({70}, raw), DataError);
  t.canonicalize();
  CHECK(t.is_canonical());
  CHECK(t == pack(RealTensor({70}, -1.0f)));
}

TEST_CASE("PBT1 serialization is byte exact") {
  const auto t = pack(RealTensor({2, 3}, {1, -1, 1, 1, -1, -1}));
  const auto bytes = serialize(t);
  const std::vector<std::uint8_t> expected = {
      'P', 'B', 'T', '1',        // magic
      2, 0, 0, 0,                // rank
      2, 0, 0, 0, 3, 0, 0, 0,    // dims
      6, 0, 0, 0, 0, 0, 0, 0,    // bit_len
      0b001101, 0, 0, 0, 0, 0, 0, 0,
  };
  CHECK(bytes == expected);
  CHECK(deserialize_packed(bytes) == t);
}

TEST_CASE("PBT1 rejects truncation and bad magic at every prefix") {
  const auto bytes = serialize(pack(RealTensor({130}, 1.0f)));
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(deserialize_packed(prefix), DataError);
  }
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_packed(bad), DataError);
}
