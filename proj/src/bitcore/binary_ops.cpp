#include "benn/bitcore/binary_ops.hpp"

#include <bit>

#include "benn/bitcore/kernels.hpp"
#include "benn/common/error.hpp"

namespace benn {

BitRows::BitRows(std::size_t rows, std::size_t bits_per_row)
    : rows_(rows), bits_(bits_per_row), words_per_row_(words_for_bits(bits_per_row)),
      words_(rows * words_per_row_, 0) {}

BitRows BitRows::from_tensor(const PackedBitTensor& t) {
  if (t.shape().empty()) throw UsageError("BitRows: rank-0 tensor");
  const std::size_t rows = t.shape()[0];
  const std::size_t cols = rows == 0 ? 0 : t.bit_len() / rows;
  BitRows out(rows, cols);
  if (cols % PackedBitTensor::kWordBits == 0) {
    std::copy(t.words().begin(), t.words().end(), out.words_.begin());
    return out;
  }
  std::size_t src = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < cols; ++i, ++src) {
      if (t.bit(src)) out.set_bit(r, i);
    }
  }
  return out;
}

BitRows BitRows::from_signs(std::span<const float> values, std::size_t rows, std::size_t cols) {
  if (values.size() != rows * cols) throw UsageError("BitRows::from_signs: size mismatch");
  BitRows out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = values.data() + r * cols;
    Word* dst = out.row(r);
    for (std::size_t w = 0; w < out.words_per_row_; ++w) {
      const std::size_t begin = w * PackedBitTensor::kWordBits;
      const std::size_t end = std::min(begin + PackedBitTensor::kWordBits, cols);
      Word word = 0;
      for (std::size_t i = begin; i < end; ++i) word |= static_cast<Word>(src[i] >= 0.0f) << (i - begin);
      dst[w] = word;
    }
  }
  return out;
}

PackedBitTensor BitRows::to_tensor(Shape shape) const {
  PackedBitTensor t(std::move(shape));
  if (t.bit_len() != rows_ * bits_) throw UsageError("BitRows::to_tensor: shape mismatch");
  std::size_t dst = 0;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t i = 0; i < bits_; ++i, ++dst) {
      if (bit(r, i)) t.set_bit(dst, true);
    }
  }
  return t;
}

std::int64_t xnor_dot(const PackedBitTensor& a, const PackedBitTensor& b) {
  if (a.bit_len() != b.bit_len()) {
    throw UsageError("xnor_dot: length mismatch " + std::to_string(a.bit_len()) + " vs " +
                     std::to_string(b.bit_len()));
  }
  const std::size_t n = a.bit_len();
  if (n == 0) return 0;
  const std::size_t full = n / PackedBitTensor::kWordBits;
  const auto wa = a.words();
  const auto wb = b.words();
  std::uint64_t matches = kernels::active().xnor_popcount(wa.data(), wb.data(), full);
  if (full < wa.size()) {
    matches += static_cast<std::uint64_t>(std::popcount(~(wa[full] ^ wb[full]) & a.tail_mask()));
  }
  return 2 * static_cast<std::int64_t>(matches) - static_cast<std::int64_t>(n);
}

void binary_gemm(const BitRows& weights, const BitRows& inputs, std::span<std::int32_t> out) {
  if (weights.bits() != inputs.bits()) {
    throw UsageError("binary_gemm: inner dimension mismatch " + std::to_string(weights.bits()) + " vs " +
                     std::to_string(inputs.bits()));
  }
  if (out.size() != weights.rows() * inputs.rows()) throw UsageError("binary_gemm: output size mismatch");
  const std::size_t n = weights.bits();
  const std::size_t wpr = weights.words_per_row();
  // Row padding is zero in both operands, so every padding bit counts as one
  // XNOR match; subtract them back out.
  const auto pad = static_cast<std::int64_t>(wpr * PackedBitTensor::kWordBits - n);
  const auto popcnt = kernels::active().xnor_popcount;
  for (std::size_t b = 0; b < inputs.rows(); ++b) {
    const auto* x = inputs.row(b);
    std::int32_t* dst = out.data() + b * weights.rows();
    for (std::size_t o = 0; o < weights.rows(); ++o) {
      const auto matches = static_cast<std::int64_t>(popcnt(weights.row(o), x, wpr)) - pad;
      dst[o] = static_cast<std::int32_t>(2 * matches - static_cast<std::int64_t>(n));
    }
  }
}

IntTensor binary_gemm(const PackedBitTensor& weights, const PackedBitTensor& inputs) {
  if (weights.shape().empty() || inputs.shape().empty()) throw UsageError("binary_gemm: rank-0 operand");
  const BitRows w = BitRows::from_tensor(weights);
  const BitRows x = BitRows::from_tensor(inputs);
  IntTensor out{{x.rows(), w.rows()}, std::vector<std::int32_t>(x.rows() * w.rows())};
  binary_gemm(w, x, out.values);
  return out;
}

ConvGeometry conv_geometry(std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
                           std::size_t stride, std::size_t pad) {
  if (kernel == 0 || stride == 0) throw UsageError("conv: kernel and stride must be positive");
  if (kernel > height + 2 * pad || kernel > width + 2 * pad) {
    throw UsageError("conv: kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(height + 2 * pad) + "x" + std::to_string(width + 2 * pad));
  }
  ConvGeometry g{channels, height, width, kernel, stride, pad, 0, 0};
  g.out_h = (height + 2 * pad - kernel) / stride + 1;
  g.out_w = (width + 2 * pad - kernel) / stride + 1;
  return g;
}

BitRows im2col_bits(const PackedBitTensor& input, std::size_t offset, const ConvGeometry& g) {
  BitRows patches(g.out_h * g.out_w, g.patch_bits());
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox, ++row) {
      std::size_t col = 0;
      for (std::size_t c = 0; c < g.channels; ++c) {
        const std::size_t plane = offset + c * g.height * g.width;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          for (std::size_t kx = 0; kx < g.kernel; ++kx, ++col) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            if (input.bit(plane + static_cast<std::size_t>(iy * w + ix))) patches.set_bit(row, col);
          }
        }
      }
    }
  }
  return patches;
}

void binary_conv(const PackedBitTensor& input, std::size_t offset, const ConvGeometry& g, const BitRows& kernels,
                 std::span<std::int32_t> out) {
  if (kernels.bits() != g.patch_bits()) throw UsageError("binary_conv: kernel size does not match geometry");
  const std::size_t positions = g.out_h * g.out_w;
  if (out.size() != kernels.rows() * positions) throw UsageError("binary_conv: output size mismatch");
  const BitRows patches = im2col_bits(input, offset, g);
  std::vector<std::int32_t> tmp(positions * kernels.rows());
  binary_gemm(kernels, patches, tmp);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t f = 0; f < kernels.rows(); ++f) out[f * positions + p] = tmp[p * kernels.rows() + f];
  }
}

IntTensor im2col_binary_conv(const PackedBitTensor& input, const PackedBitTensor& kernels, std::size_t stride,
                             std::size_t padding) {
  if (input.shape().size() != 3) throw UsageError("im2col_binary_conv: input must be [C x H x W]");
  if (kernels.shape().size() != 4) throw UsageError("im2col_binary_conv: kernels must be [F x C x k x k]");
  const auto& is = input.shape();
  const auto& ks = kernels.shape();
  if (ks[1] != is[0]) throw UsageError("im2col_binary_conv: channel mismatch");
  if (ks[2] != ks[3]) throw UsageError("im2col_binary_conv: kernels must be square");
  const std::size_t k = ks[2];
  if (stride == 0) throw UsageError("im2col_binary_conv: stride must be positive");
  if (k > is[1] + 2 * padding || k > is[2] + 2 * padding) {
    throw UsageError("im2col_binary_conv: kernel larger than padded input");
  }
  const ConvGeometry g = conv_geometry(is[0], is[1], is[2], k, stride, padding);
  IntTensor out{{ks[0], g.out_h, g.out_w}, std::vector<std::int32_t>(ks[0] * g.out_h * g.out_w)};
  binary_conv(input, 0, g, BitRows::from_tensor(kernels), out.values);
  return out;
}

}  // namespace benn
