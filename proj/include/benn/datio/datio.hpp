#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>

#include "benn/dataset.hpp"

namespace benn {

// Maps a byte pixel to [-1, 1]: p * 2 / 255 - 1.
inline float normalize_pixel(std::uint8_t p) { return static_cast<float>(p) * 2.0f / 255.0f - 1.0f; }

// Big-endian IDX (MNIST layout): a ubyte image file (magic 0x00000803,
// dims N x H x W) and a ubyte label file (magic 0x00000801, dim N).
RealTensor parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes
// (R, G, B planes of 32x32).
Dataset parse_cifar10_bin(std::span<const std::uint8_t> bytes);
Dataset load_cifar10_bin(const std::filesystem::path& path);

enum class ToyGenerator {
  kGaussianBlobs,  // [N x dim] points around C random centers
  kXorRings,       // [N x dim]; label = (quadrant parity + ring index) mod C
  kBlobImages,     // [N x 1 x dim x dim] rendered class-specific bump patterns
};

ToyGenerator parse_toy_generator(std::string_view name);

struct ToySpec {
  ToyGenerator generator = ToyGenerator::kGaussianBlobs;
  std::size_t n = 1000;
  std::size_t classes = 2;
  std::size_t dim = 2;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

// Deterministic under `seed`; class counts differ by at most one.
Dataset make_toy(const ToySpec& spec);

// Seeded permutation split: the first round(test_fraction * N) permuted rows
// become the test split.
std::pair<Dataset, Dataset> split_train_test(const Dataset& all, double test_fraction, std::uint64_t seed);

}  // namespace benn
