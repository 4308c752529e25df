// Compiled with -mavx2 -mfma -mpopcnt; only reached after a CPUID check.
#include <immintrin.h>

#include <bit>

#include "benn/bitcore/kernels.hpp"

namespace benn::kernels {
namespace {

// Nibble-LUT popcount per byte, summed into 64-bit lanes with SAD.
inline __m256i popcount_bytes_to_u64(__m256i v) {
  const __m256i lut = _mm256_setr_epi8(0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4,
                                       0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4);
  const __m256i low_mask = _mm256_set1_epi8(0x0f);
  const __m256i lo = _mm256_and_si256(v, low_mask);
  const __m256i hi = _mm256_and_si256(_mm256_srli_epi16(v, 4), low_mask);
  const __m256i counts = _mm256_add_epi8(_mm256_shuffle_epi8(lut, lo), _mm256_shuffle_epi8(lut, hi));
  return _mm256_sad_epu8(counts, _mm256_setzero_si256());
}

std::uint64_t xnor_popcount_avx2(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
  std::size_t i = 0;
  std::uint64_t count = 0;
  if (words >= 4) {
    const __m256i ones = _mm256_set1_epi64x(-1);
    __m256i acc = _mm256_setzero_si256();
    for (; i + 4 <= words; i += 4) {
      const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
      const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
      const __m256i x = _mm256_xor_si256(_mm256_xor_si256(va, vb), ones);
      acc = _mm256_add_epi64(acc, popcount_bytes_to_u64(x));
    }
    alignas(32) std::uint64_t lanes[4];
    _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
    count = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  }
  for (; i < words; ++i) count += static_cast<std::uint64_t>(_mm_popcnt_u64(~(a[i] ^ b[i])));
  return count;
}

float dot_f32_avx2(const float* a, const float* b, std::size_t n) {
  std::size_t i = 0;
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  acc0 = _mm256_add_ps(acc0, acc1);
  const __m128 s4 = _mm_add_ps(_mm256_castps256_ps128(acc0), _mm256_extractf128_ps(acc0, 1));
  const __m128 s2 = _mm_add_ps(s4, _mm_movehl_ps(s4, s4));
  const __m128 s1 = _mm_add_ss(s2, _mm_shuffle_ps(s2, s2, 0x55));
  float acc = _mm_cvtss_f32(s1);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32_avx2(float alpha, const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  const __m256 va = _mm256_set1_ps(alpha);
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

const KernelTable& avx2_table_impl() {
  static const KernelTable table{"avx2", xnor_popcount_avx2, dot_f32_avx2, axpy_f32_avx2};
  return table;
}

}  // namespace benn::kernels
