#include "benn/bitcore/packed_bit_tensor.hpp"

#include <cmath>

#include "benn/common/error.hpp"

namespace benn {

PackedBitTensor::PackedBitTensor(Shape shape)
    : shape_(std::move(shape)), bit_len_(numel(shape_)), words_(words_for_bits(bit_len_), 0) {}

PackedBitTensor PackedBitTensor::from_words(Shape shape, std::vector<Word> words) {
  PackedBitTensor t(std::move(shape));
  if (words.size() != t.words_.size()) {
    throw DataError("packed tensor " + shape_string(t.shape_) + " needs " + std::to_string(t.words_.size()) +
                    " words, got " + std::to_string(words.size()));
  }
  t.words_ = std::move(words);
  if (!t.is_canonical()) throw DataError("packed tensor has non-zero padding bits");
  return t;
}

PackedBitTensor::Word PackedBitTensor::tail_mask() const {
  const std::size_t rem = bit_len_ % kWordBits;
  return rem == 0 ? ~Word{0} : (Word{1} << rem) - 1;
}

bool PackedBitTensor::is_canonical() const {
  if (words_.empty()) return true;
  return (words_.back() & ~tail_mask()) == 0;
}

void PackedBitTensor::canonicalize() {
  if (!words_.empty()) words_.back() &= tail_mask();
}

PackedBitTensor pack(std::span<const float> values, Shape shape) {
  PackedBitTensor t(std::move(shape));
  if (values.size() != t.bit_len()) {
    throw UsageError("pack: " + std::to_string(values.size()) + " values for shape " + shape_string(t.shape()));
  }
  auto words = t.mutable_words();
  for (std::size_t w = 0; w < words.size(); ++w) {
    const std::size_t begin = w * PackedBitTensor::kWordBits;
    const std::size_t end = std::min(begin + PackedBitTensor::kWordBits, values.size());
    PackedBitTensor::Word word = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const float e = values[i];
      if (!std::isfinite(e)) throw UsageError("pack: non-finite element at index " + std::to_string(i));
      word |= static_cast<PackedBitTensor::Word>(e >= 0.0f) << (i - begin);
    }
    words[w] = word;
  }
  return t;
}

PackedBitTensor pack(const RealTensor& signs) { return pack(signs.values(), signs.shape()); }

RealTensor unpack(const PackedBitTensor& t) {
  RealTensor out(t.shape());
  for (std::size_t i = 0; i < t.bit_len(); ++i) out[i] = t.bit(i) ? 1.0f : -1.0f;
  return out;
}

void write_packed(ByteWriter& out, const PackedBitTensor& t) {
  out.raw("PBT1");
  out.u32(static_cast<std::uint32_t>(t.shape().size()));
  for (std::size_t d : t.shape()) out.u32(static_cast<std::uint32_t>(d));
  out.u64(t.bit_len());
  for (auto w : t.words()) out.u64(w);
}

PackedBitTensor read_packed(ByteReader& in) {
  if (in.raw(4) != "PBT1") in.fail("bad packed-tensor magic");
  const std::uint32_t rank = in.u32();
  if (rank > 8) in.fail("packed tensor rank " + std::to_string(rank) + " too large");
  Shape shape(rank);
  for (auto& d : shape) d = in.u32();
  const std::uint64_t bit_len = in.u64();
  if (bit_len != numel(shape)) in.fail("bit_len does not match shape " + shape_string(shape));
  const std::size_t nwords = words_for_bits(bit_len);
  if (nwords * 8 > in.remaining()) in.fail("truncated packed tensor payload");
  std::vector<PackedBitTensor::Word> words(nwords);
  for (auto& w : words) w = in.u64();
  return PackedBitTensor::from_words(std::move(shape), std::move(words));
}

std::vector<std::uint8_t> serialize(const PackedBitTensor& t) {
  ByteWriter w;
  write_packed(w, t);
  return w.take();
}

PackedBitTensor deserialize_packed(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "packed tensor");
  auto t = read_packed(r);
  if (!r.at_end()) r.fail("trailing bytes after packed tensor");
  return t;
}

}  // namespace benn
