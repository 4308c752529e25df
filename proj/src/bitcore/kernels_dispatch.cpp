#include <atomic>
#include <cstdlib>
#include <string>

#include "benn/bitcore/kernels.hpp"

namespace benn::kernels {

#if defined(BENN_HAVE_AVX2_KERNELS)
const KernelTable& avx2_table_impl();
#endif

const KernelTable* avx2_table() {
#if defined(BENN_HAVE_AVX2_KERNELS)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") &&
           __builtin_cpu_supports("popcnt");
  }();
  return supported ? &avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("BENN_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2_table()) return avx2_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const KernelTable* t = nullptr;
  if (name == "scalar") t = &scalar_table();
  else if (name == "avx2") t = avx2_table();
  if (!t) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace benn::kernels
