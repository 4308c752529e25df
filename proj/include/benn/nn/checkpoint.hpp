#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "benn/nn/network.hpp"

namespace benn {

// Container shared by checkpoints and packed exports:
//   magic (8 bytes) | version u32 | payload length u64 | FNV-1a64(payload) u64 | payload
// Unknown versions, length mismatches and hash mismatches raise DataError.
std::vector<std::uint8_t> wrap_container(std::string_view magic, std::uint32_t version,
                                         std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> unwrap_container(std::string_view magic, std::uint32_t version,
                                           std::span<const std::uint8_t> bytes, std::string_view what);

// Full training state: canonical config text, shadow weights, biases,
// batchnorm parameters and running statistics (f32 LE), per-filter scales.
std::vector<std::uint8_t> save_checkpoint(Network& net);
Network load_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(Network& net, const std::filesystem::path& path);
Network load_checkpoint_file(const std::filesystem::path& path);

// Inference-only export: 1-bit layers as packed sign bits plus scales,
// everything else as f32. The reloaded network computes the same forward
// pass bit-for-bit but cannot be trained.
std::vector<std::uint8_t> export_packed(Network& net);
Network load_packed(std::span<const std::uint8_t> bytes);

// Loads either format by magic.
Network load_model_file(const std::filesystem::path& path);

}  // namespace benn
