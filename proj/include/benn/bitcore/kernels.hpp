#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Inner-loop kernels. Each instruction set provides the same table; the
// dispatcher picks the widest one the CPU supports at first use.
//
// The set can be pinned with the environment variable BENN_KERNELS
// ("scalar" or "avx2") or programmatically with kernels::select().
namespace benn::kernels {

struct KernelTable {
  std::string_view name;
  // Sum over `words` of popcount(~(a[i] ^ b[i])).
  std::uint64_t (*xnor_popcount)(const std::uint64_t* a, const std::uint64_t* b, std::size_t words);
  float (*dot_f32)(const float* a, const float* b, std::size_t n);
  // y += alpha * x
  void (*axpy_f32)(float alpha, const float* x, float* y, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the build or the CPU lacks AVX2/FMA/POPCNT.
const KernelTable* avx2_table();

const KernelTable& active();
// Selects by name; returns false and leaves the selection unchanged when the
// requested set is unavailable.
bool select(std::string_view name);

}  // namespace benn::kernels
