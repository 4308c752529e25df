#include <algorithm>
#include <map>

#include "benn/common/error.hpp"
#include "benn/datio/datio.hpp"
#include "benn/nn/trainer.hpp"
#include "doctest.h"

using namespace benn;

namespace {

void be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w) {
  std::vector<std::uint8_t> b;
  be32(b, 0x803);
  be32(b, n);
  be32(b, h);
  be32(b, w);
  for (std::uint32_t i = 0; i < n * h * w; ++i) b.push_back(static_cast<std::uint8_t>(i * 37));
  return b;
}

double linear_probe(const Dataset& d) {
  Network net(NetworkConfig::parse("input " + std::to_string(d.example_shape()[0]) + "\nfc width=" +
                                   std::to_string(d.num_classes) + "\n"),
              0);
  TrainOptions opt;
  opt.epochs = 60;
  opt.batch_size = 32;
  opt.optimizer.lr = 0.05;
  return train_network(net, d, {}, nullptr, opt).epochs.back().train_accuracy;
}

}  // namespace

TEST_CASE("pixel normalization endpoints and midpoint") {
  CHECK(normalize_pixel(0) == -1.0f);
  CHECK(normalize_pixel(255) == 1.0f);
  CHECK(normalize_pixel(128) == doctest::Approx(128.0 * 2 / 255 - 1).epsilon(1e-7));
  for (int p = 1; p < 256; ++p) CHECK(normalize_pixel(static_cast<std::uint8_t>(p)) > normalize_pixel(static_cast<std::uint8_t>(p - 1)));
}

TEST_CASE("IDX images and labels") {
  const auto img = idx_images(3, 28, 28);
  const auto t = parse_idx_images(img);
  CHECK(t.shape() == Shape{3, 1, 28, 28});
  CHECK(t[1] == normalize_pixel(37));
  std::vector<std::uint8_t> lab;
  be32(lab, 0x801);
  be32(lab, 3);
  lab.insert(lab.end(), {7, 0, 9});
  CHECK(parse_idx_labels(lab) == std::vector<int>{7, 0, 9});

  auto bad = img;
  bad[3] = 0x01;
  CHECK_THROWS_AS(parse_idx_images(bad), DataError);
  for (std::size_t cut = 0; cut < img.size(); cut += 97) {
    CHECK_THROWS_AS(parse_idx_images(std::span(img).first(cut)), DataError);
  }
  for (std::size_t cut = 0; cut < lab.size(); ++cut) {
    CHECK_THROWS_AS(parse_idx_labels(std::span(lab).first(cut)), DataError);
  }
}

TEST_CASE("CIFAR-10 binary records") {
  std::vector<std::uint8_t> rec(3073, 0);
  rec[0] = 9;
  rec[1] = 255;       // R plane, first pixel
  rec[1 + 1024] = 0;  // G plane
  const auto d = parse_cifar10_bin(rec);
  CHECK(d.size() == 1);
  CHECK(d.labels[0] == 9);
  CHECK(d.images.shape() == Shape{1, 3, 32, 32});
  CHECK(d.images[0] == 1.0f);
  CHECK(d.images[1024] == -1.0f);
  d.validate();
  rec.push_back(0);
  CHECK_THROWS_AS(parse_cifar10_bin(rec), DataError);
  rec.resize(3073);
  rec[0] = 10;
  CHECK_THROWS_AS(parse_cifar10_bin(rec), DataError);
}

TEST_CASE("toy generators are seeded, balanced and normalized") {
  for (auto gen : {ToyGenerator::kGaussianBlobs, ToyGenerator::kXorRings, ToyGenerator::kBlobImages}) {
    const ToySpec spec{gen, 103, 4, 8, 0.3, 42};
    const auto a = make_toy(spec);
    const auto b = make_toy(spec);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
    a.validate();
    std::map<int, int> counts;
    for (int l : a.labels) ++counts[l];
    CHECK(counts.size() == 4);
    for (auto& [c, n] : counts) CHECK(std::abs(n - 103 / 4) <= 1);
    auto other = spec;
    other.seed = 43;
    CHECK(!(make_toy(other).images == a.images));
  }
  CHECK(make_toy({ToyGenerator::kBlobImages, 10, 2, 8, 0.1, 0}).example_shape() == Shape{1, 8, 8});
  CHECK_THROWS_AS(make_toy({ToyGenerator::kGaussianBlobs, 3, 4, 2, 0.1, 0}), UsageError);
}

TEST_CASE("noise-free blobs are linearly separable; xor rings are not") {
  CHECK(linear_probe(make_toy({ToyGenerator::kGaussianBlobs, 200, 3, 2, 0.0, 1})) == 1.0);
  CHECK(linear_probe(make_toy({ToyGenerator::kXorRings, 400, 2, 2, 0.0, 1})) <= 0.75);
}

TEST_CASE("train/test split is a seeded partition") {
  const auto all = make_toy({ToyGenerator::kGaussianBlobs, 100, 2, 3, 0.2, 1});
  const auto [train, test] = split_train_test(all, 0.25, 9);
  CHECK(train.size() == 75);
  CHECK(test.size() == 25);
  const auto [train2, test2] = split_train_test(all, 0.25, 9);
  CHECK(train2.images == train.images);
  CHECK_THROWS_AS(split_train_test(all, 1.0, 9), UsageError);
}
