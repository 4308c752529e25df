#include "benn/datio/datio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "benn/common/binary_io.hpp"
#include "benn/common/error.hpp"
#include "benn/common/rng.hpp"

namespace benn {
namespace {

std::uint32_t read_be32(ByteReader& r) {
  const auto b = r.bytes(4);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::vector<int> balanced_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

float clamp_unit(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

Dataset gaussian_blobs(const ToySpec& s, Rng& rng) {
  std::uniform_real_distribution<double> center(-0.7, 0.7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Rejection-sample centers at least `min_dist` apart, relaxing the
  // requirement when it cannot be met (many classes in few dimensions).
  std::vector<double> centers(s.classes * s.dim);
  double min_dist = 0.8;
  for (std::size_t c = 0; c < s.classes;) {
    for (std::size_t j = 0; j < s.dim; ++j) centers[c * s.dim + j] = center(rng);
    bool ok = true;
    for (std::size_t o = 0; o < c && ok; ++o) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < s.dim; ++j) {
        const double diff = centers[c * s.dim + j] - centers[o * s.dim + j];
        d2 += diff * diff;
      }
      ok = d2 >= min_dist * min_dist;
    }
    if (ok) {
      ++c;
    } else {
      min_dist *= 0.999;
    }
  }
  Dataset d;
  d.labels = balanced_labels(s.n, s.classes, rng);
  d.images = RealTensor({s.n, s.dim});
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto c = static_cast<std::size_t>(d.labels[i]);
    for (std::size_t j = 0; j < s.dim; ++j) {
      d.images[i * s.dim + j] = clamp_unit(centers[c * s.dim + j] + s.noise * gauss(rng));
    }
  }
  return d;
}

Dataset xor_rings(const ToySpec& s, Rng& rng) {
  if (s.dim < 2) throw UsageError("xor_rings needs dim >= 2");
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset d;
  d.labels = balanced_labels(s.n, s.classes, rng);
  d.images = RealTensor({s.n, s.dim});
  for (std::size_t i = 0; i < s.n; ++i) {
    // Rejection-sample a point whose noiseless label matches.
    double x = 0.0, y = 0.0;
    for (;;) {
      x = unit(rng);
      y = unit(rng);
      const int parity = (x < 0) != (y < 0);
      const int ring = std::min(static_cast<int>(s.classes) - 1,
                                static_cast<int>(std::hypot(x, y) * static_cast<double>(s.classes) / 1.2));
      if (static_cast<int>((parity + ring) % static_cast<int>(s.classes)) == d.labels[i]) break;
    }
    float* row = d.images.data() + i * s.dim;
    row[0] = clamp_unit(x + s.noise * gauss(rng));
    row[1] = clamp_unit(y + s.noise * gauss(rng));
    for (std::size_t j = 2; j < s.dim; ++j) row[j] = clamp_unit(s.noise * gauss(rng));
  }
  return d;
}

// Each class owns three bumps at random grid positions with random signs.
// An example renders its class's bumps with positional jitter, amplitude
// jitter and pixel noise, all scaled by `noise`.
Dataset blob_images(const ToySpec& s, Rng& rng) {
  constexpr std::size_t kBumps = 3;
  const std::size_t side = s.dim;
  const double extent = static_cast<double>(side) - 1.0;
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::normal_distribution<double> gauss(0.0, 1.0);
  struct Bump {
    double y, x, sign;
  };
  std::vector<Bump> protos(s.classes * kBumps);
  for (auto& b : protos) b = {pos(rng), pos(rng), (rng() & 1) ? 1.0 : -1.0};
  Dataset d;
  d.labels = balanced_labels(s.n, s.classes, rng);
  d.images = RealTensor({s.n, 1, side, side});
  const double width = 0.12 * static_cast<double>(side);
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto c = static_cast<std::size_t>(d.labels[i]);
    std::vector<double> img(side * side, 0.0);
    for (std::size_t k = 0; k < kBumps; ++k) {
      const Bump& b = protos[c * kBumps + k];
      const double by = b.y + 2.0 * s.noise * gauss(rng);
      const double bx = b.x + 2.0 * s.noise * gauss(rng);
      const double amp = b.sign * (1.0 + 0.5 * s.noise * gauss(rng));
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double dy = static_cast<double>(y) - by, dx = static_cast<double>(x) - bx;
          img[y * side + x] += amp * std::exp(-(dy * dy + dx * dx) / (2 * width * width));
        }
      }
    }
    float* out = d.images.data() + i * side * side;
    for (std::size_t p = 0; p < side * side; ++p) out[p] = clamp_unit(img[p] + 0.5 * s.noise * gauss(rng));
  }
  return d;
}

}  // namespace

RealTensor parse_idx_images(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "idx images");
  if (read_be32(r) != 0x00000803) r.fail("bad magic (expected 0x00000803, unsigned byte, 3 dims)");
  const std::size_t n = read_be32(r), h = read_be32(r), w = read_be32(r);
  if (h == 0 || w == 0) r.fail("zero image dimension");
  if (r.remaining() != n * h * w) {
    r.fail("expected " + std::to_string(n * h * w) + " pixel bytes, found " + std::to_string(r.remaining()));
  }
  const auto px = r.bytes(n * h * w);
  RealTensor t({n, 1, h, w});
  for (std::size_t i = 0; i < px.size(); ++i) t[i] = normalize_pixel(px[i]);
  return t;
}

std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "idx labels");
  if (read_be32(r) != 0x00000801) r.fail("bad magic (expected 0x00000801, unsigned byte, 1 dim)");
  const std::size_t n = read_be32(r);
  if (r.remaining() != n) r.fail("expected " + std::to_string(n) + " labels, found " + std::to_string(r.remaining()));
  const auto b = r.bytes(n);
  return {b.begin(), b.end()};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  Dataset d;
  d.images = parse_idx_images(read_file(images));
  d.labels = parse_idx_labels(read_file(labels));
  if (d.labels.size() != d.images.dim(0)) {
    throw DataError("idx: " + std::to_string(d.images.dim(0)) + " images but " + std::to_string(d.labels.size()) +
                    " labels");
  }
  const int max_label = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end());
  d.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  d.split = images.filename().string();
  return d;
}

Dataset parse_cifar10_bin(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kRecord = 3073;
  if (bytes.empty() || bytes.size() % kRecord != 0) {
    throw DataError("cifar10: file size " + std::to_string(bytes.size()) + " is not a positive multiple of 3073");
  }
  const std::size_t n = bytes.size() / kRecord;
  Dataset d;
  d.num_classes = 10;
  d.images = RealTensor({n, 3, 32, 32});
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + i * kRecord;
    if (rec[0] > 9) throw DataError("cifar10: record " + std::to_string(i) + " has label " + std::to_string(rec[0]));
    d.labels[i] = rec[0];
    for (std::size_t p = 0; p < 3072; ++p) d.images[i * 3072 + p] = normalize_pixel(rec[1 + p]);
  }
  return d;
}

Dataset load_cifar10_bin(const std::filesystem::path& path) {
  Dataset d = parse_cifar10_bin(read_file(path));
  d.split = path.filename().string();
  return d;
}

ToyGenerator parse_toy_generator(std::string_view name) {
  if (name == "gaussian_blobs" || name == "blobs") return ToyGenerator::kGaussianBlobs;
  if (name == "xor_rings") return ToyGenerator::kXorRings;
  if (name == "blob_images") return ToyGenerator::kBlobImages;
  throw UsageError("unknown toy generator '" + std::string(name) + "'");
}

Dataset make_toy(const ToySpec& spec) {
  if (spec.classes < 2) throw UsageError("toy data needs at least 2 classes");
  if (spec.n < spec.classes) throw UsageError("toy data needs N >= C");
  if (spec.dim == 0) throw UsageError("toy data needs dim >= 1");
  if (spec.noise < 0) throw UsageError("toy noise must be nonnegative");
  Rng rng = make_rng(spec.seed, 0x70e);
  Dataset d;
  switch (spec.generator) {
    case ToyGenerator::kGaussianBlobs:
      d = gaussian_blobs(spec, rng);
      break;
    case ToyGenerator::kXorRings:
      d = xor_rings(spec, rng);
      break;
    case ToyGenerator::kBlobImages:
      d = blob_images(spec, rng);
      break;
  }
  d.num_classes = spec.classes;
  d.split = "toy";
  return d;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& all, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must be in (0, 1)");
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x5b1);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(all.size())));
  const std::span<const std::size_t> idx(order);
  Dataset test = all.gather(idx.first(n_test));
  Dataset train = all.gather(idx.subspan(n_test));
  train.split = "train";
  test.split = "test";
  return {std::move(train), std::move(test)};
}

}  // namespace benn
