#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "benn/common/binary_io.hpp"
#include "benn/tensor.hpp"

namespace benn {

// Sign tensor stored one bit per element. Bit 1 encodes +1, bit 0 encodes -1.
// Element i lives in bit (i % 64) of word (i / 64). Bits past bit_len() are
// always zero in a canonical tensor.
class PackedBitTensor {
 public:
  using Word = std::uint64_t;
  static constexpr std::size_t kWordBits = 64;

  PackedBitTensor() = default;
  // All elements -1.
  explicit PackedBitTensor(Shape shape);

  // Adopts raw words. Throws DataError if the word count does not match the
  // shape or if padding bits are set.
  static PackedBitTensor from_words(Shape shape, std::vector<Word> words);

  const Shape& shape() const { return shape_; }
  std::size_t bit_len() const { return bit_len_; }
  std::size_t word_count() const { return words_.size(); }
  std::span<const Word> words() const { return words_; }
  // Mutable access to storage. Writers must leave padding bits zero or call
  // canonicalize() afterwards.
  std::span<Word> mutable_words() { return words_; }

  bool bit(std::size_t i) const { return (words_[i / kWordBits] >> (i % kWordBits)) & 1u; }
  void set_bit(std::size_t i, bool v) {
    const Word m = Word{1} << (i % kWordBits);
    if (v) words_[i / kWordBits] |= m;
    else words_[i / kWordBits] &= ~m;
  }
  int sign(std::size_t i) const { return bit(i) ? 1 : -1; }

  // Mask of valid bits in the last word (all ones when bit_len is a multiple
  // of 64).
  Word tail_mask() const;
  bool is_canonical() const;
  void canonicalize();

  bool operator==(const PackedBitTensor& other) const {
    return shape_ == other.shape_ && bit_len_ == other.bit_len_ && words_ == other.words_;
  }

 private:
  Shape shape_;
  std::size_t bit_len_ = 0;
  std::vector<Word> words_;
};

inline std::size_t words_for_bits(std::size_t bits) {
  return (bits + PackedBitTensor::kWordBits - 1) / PackedBitTensor::kWordBits;
}

// Sign(e) with Sign(0) = +1. Throws UsageError naming the first non-finite
// index.
PackedBitTensor pack(const RealTensor& signs);
PackedBitTensor pack(std::span<const float> values, Shape shape);
RealTensor unpack(const PackedBitTensor& t);

// "PBT1" | rank:u32 | dims:u32[rank] | bit_len:u64 | words:u64[ceil(bit_len/64)]
// All little-endian.
void write_packed(ByteWriter& out, const PackedBitTensor& t);
PackedBitTensor read_packed(ByteReader& in);
std::vector<std::uint8_t> serialize(const PackedBitTensor& t);
PackedBitTensor deserialize_packed(std::span<const std::uint8_t> bytes);

}  // namespace benn
