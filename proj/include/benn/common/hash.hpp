#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace benn {

// 64-bit FNV-1a. Content addressing and corruption detection only; not
// cryptographic.
inline std::uint64_t fnv1a64(std::span<const std::byte> data,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::byte b : data) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  return fnv1a64(std::as_bytes(std::span(s.data(), s.size())));
}

std::string hex64(std::uint64_t v);

}  // namespace benn
