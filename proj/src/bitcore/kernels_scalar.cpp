#include <bit>

#include "benn/bitcore/kernels.hpp"

namespace benn::kernels {
namespace {

std::uint64_t xnor_popcount_scalar(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < words; ++i) count += static_cast<std::uint64_t>(std::popcount(~(a[i] ^ b[i])));
  return count;
}

float dot_f32_scalar(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", xnor_popcount_scalar, dot_f32_scalar, axpy_f32_scalar};
  return table;
}

}  // namespace benn::kernels
