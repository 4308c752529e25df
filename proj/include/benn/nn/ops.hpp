#pragma once

#include <span>
#include <vector>

#include "benn/tensor.hpp"

namespace benn {

// Elementwise Sign with Sign(0) = +1.
RealTensor binarize_forward(const RealTensor& x);

// Straight-through estimator: passes upstream where |x| <= 1, zero elsewhere.
RealTensor ste_backward(const RealTensor& upstream, const RealTensor& x_at_forward);

// Uniform k-bit quantizer on clip(x, -1, 1) with 2^k levels spanning [-1, 1],
// rounding half up. Idempotent.
float quantize_value(float x, int k);
RealTensor quantize_k_bit(const RealTensor& x, int k);

// Row-wise softmax of [N x C] logits.
RealTensor softmax_rows(const RealTensor& logits);

struct LossResult {
  double loss = 0.0;      // mean over the batch of factor_i * CE_i
  RealTensor grad;        // d loss / d logits
  std::size_t correct = 0;
};

// Softmax cross-entropy. `factors` (empty = all ones) multiply each
// example's loss term.
LossResult softmax_cross_entropy(const RealTensor& logits, std::span<const int> labels,
                                 std::span<const double> factors = {});

std::vector<int> argmax_rows(const RealTensor& rows);

}  // namespace benn
