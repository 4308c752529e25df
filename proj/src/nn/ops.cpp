#include "benn/nn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "benn/common/error.hpp"

namespace benn {

RealTensor binarize_forward(const RealTensor& x) {
  if (auto bad = x.first_non_finite(); bad != x.size()) {
    throw NumericalError("binarize: non-finite input at index " + std::to_string(bad));
  }
  RealTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= 0.0f ? 1.0f : -1.0f;
  return out;
}

RealTensor ste_backward(const RealTensor& upstream, const RealTensor& x) {
  if (upstream.shape() != x.shape()) {
    throw UsageError("ste_backward: shape " + shape_string(upstream.shape()) + " vs " + shape_string(x.shape()));
  }
  RealTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]) <= 1.0f ? upstream[i] : 0.0f;
  return out;
}

float quantize_value(float x, int k) {
  const double levels = static_cast<double>((1 << k) - 1);
  const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
  const double step = std::floor((c + 1.0) / 2.0 * levels + 0.5);
  return static_cast<float>(step / levels * 2.0 - 1.0);
}

RealTensor quantize_k_bit(const RealTensor& x, int k) {
  if (k < 2 || k > 8) throw UsageError("quantize_k_bit: k must be in 2..8, got " + std::to_string(k));
  RealTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = quantize_value(x[i], k);
  return out;
}

RealTensor softmax_rows(const RealTensor& logits) {
  if (logits.rank() != 2) throw UsageError("softmax_rows: expected [N x C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  RealTensor out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const float* z = logits.data() + r * c;
    float* p = out.data() + r * c;
    const float m = *std::max_element(z, z + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j] - m));
    for (std::size_t j = 0; j < c; ++j) p[j] = static_cast<float>(std::exp(static_cast<double>(z[j] - m)) / sum);
  }
  return out;
}

LossResult softmax_cross_entropy(const RealTensor& logits, std::span<const int> labels,
                                 std::span<const double> factors) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) throw UsageError("cross_entropy: batch size mismatch");
  if (!factors.empty() && factors.size() != labels.size()) throw UsageError("cross_entropy: factor count mismatch");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  LossResult r;
  r.grad = RealTensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw UsageError("cross_entropy: label out of range");
    const float* z = logits.data() + i * c;
    const float m = *std::max_element(z, z + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(static_cast<double>(z[j] - m));
    const double log_sum = std::log(sum) + m;
    const double f = factors.empty() ? 1.0 : factors[i];
    total += f * (log_sum - z[y]);
    std::size_t best = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(static_cast<double>(z[j]) - log_sum);
      r.grad[i * c + j] = static_cast<float>(f * (p - (static_cast<int>(j) == y ? 1.0 : 0.0)) / static_cast<double>(n));
      if (z[j] > z[best]) best = j;
    }
    r.correct += static_cast<int>(best) == y;
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

std::vector<int> argmax_rows(const RealTensor& rows) {
  if (rows.rank() != 2) throw UsageError("argmax_rows: expected [N x C]");
  const std::size_t n = rows.dim(0), c = rows.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* r = rows.data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (r[j] > r[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace benn
