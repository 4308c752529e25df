#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "benn/bitcore/packed_bit_tensor.hpp"

namespace benn {

struct IntTensor {
  Shape shape;
  std::vector<std::int32_t> values;

  bool operator==(const IntTensor&) const = default;
};

// Bit matrix whose rows start on word boundaries. This is the operand layout
// of the GEMM kernel; PackedBitTensor is the flat storage/serialization
// layout. Padding bits at the end of every row are zero.
class BitRows {
 public:
  using Word = PackedBitTensor::Word;

  BitRows() = default;
  BitRows(std::size_t rows, std::size_t bits_per_row);

  // Leading dimension becomes rows, the rest is flattened into each row.
  static BitRows from_tensor(const PackedBitTensor& t);
  // Sign-packs a row-major float matrix (Sign(0) = +1).
  static BitRows from_signs(std::span<const float> values, std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t bits() const { return bits_; }
  std::size_t words_per_row() const { return words_per_row_; }
  Word* row(std::size_t r) { return words_.data() + r * words_per_row_; }
  const Word* row(std::size_t r) const { return words_.data() + r * words_per_row_; }
  void set_bit(std::size_t r, std::size_t i) {
    row(r)[i / PackedBitTensor::kWordBits] |= Word{1} << (i % PackedBitTensor::kWordBits);
  }
  bool bit(std::size_t r, std::size_t i) const {
    return (row(r)[i / PackedBitTensor::kWordBits] >> (i % PackedBitTensor::kWordBits)) & 1u;
  }

  PackedBitTensor to_tensor(Shape shape) const;

 private:
  std::size_t rows_ = 0;
  std::size_t bits_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<Word> words_;
};

// Sum over i of a_i * b_i in the +-1 domain:
// 2 * popcount(XNOR(a, b) masked to n bits) - n.
std::int64_t xnor_dot(const PackedBitTensor& a, const PackedBitTensor& b);

// out[b * W.rows() + o] = xnor_dot(W row o, X row b). Both operands must share
// bits(). `out` must hold X.rows() * W.rows() entries.
void binary_gemm(const BitRows& weights, const BitRows& inputs, std::span<std::int32_t> out);

// W [out x in...], X [batch x in...] -> [batch x out].
IntTensor binary_gemm(const PackedBitTensor& weights, const PackedBitTensor& inputs);

struct ConvGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  std::size_t patch_bits() const { return channels * kernel * kernel; }
};

// Output extent with floor semantics; throws UsageError when the kernel does
// not fit in the padded input.
ConvGeometry conv_geometry(std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
                           std::size_t stride, std::size_t pad);

// Materializes one packed patch row per output position. Padding positions
// read as -1 (bit 0).
BitRows im2col_bits(const PackedBitTensor& input, std::size_t input_offset_bits, const ConvGeometry& g);

// Writes [filters x out_h x out_w] into `out`.
void binary_conv(const PackedBitTensor& input, std::size_t input_offset_bits, const ConvGeometry& g,
                 const BitRows& kernels, std::span<std::int32_t> out);

// input [C x H x W], kernels [F x C x k x k] -> [F x H' x W'] with
// H' = floor((H + 2p - k) / stride) + 1; trailing rows/columns that do not
// fill a whole window are skipped.
IntTensor im2col_binary_conv(const PackedBitTensor& input, const PackedBitTensor& kernels, std::size_t stride,
                             std::size_t padding);

}  // namespace benn
