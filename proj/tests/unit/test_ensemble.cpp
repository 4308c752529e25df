#include <cmath>
#include <filesystem>
#include <set>

#include "benn/common/binary_io.hpp"
#include "benn/common/error.hpp"
#include "benn/datio/datio.hpp"
#include "benn/ensemble/ensemble.hpp"
#include "benn/nn/checkpoint.hpp"
#include "doctest.h"

using namespace benn;

namespace {

const char* kMlp = R"(input 2
fc width=16
batchnorm
sign
fc width=16 wbits=1
batchnorm
sign
fc width=2
)";

RealTensor rows(std::initializer_list<std::initializer_list<float>> r) {
  std::vector<float> v;
  std::size_t c = 0;
  for (auto row : r) {
    c = row.size();
    v.insert(v.end(), row);
  }
  return RealTensor({r.size(), c}, std::move(v));
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("benn_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("bootstrap covers about 63% of the set") {
  const auto u = SampleWeights::uniform(10000);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto idx = bagging_sample(10000, u.u, seed);
    CHECK(idx.size() == 10000);
    const std::set<std::size_t> distinct(idx.begin(), idx.end());
    CHECK(std::abs(static_cast<double>(distinct.size()) / 10000.0 - 0.632) <= 0.02);
  }
  CHECK(bagging_sample(100, u.u, 3) == bagging_sample(100, u.u, 3));
  CHECK(bagging_sample(100, u.u, 3) != bagging_sample(100, u.u, 4));
}

TEST_CASE("bagging_sample follows the weights") {
  std::vector<double> onehot(7, 0.0);
  onehot[4] = 1.0;
  for (auto i : bagging_sample(50, onehot, 1)) CHECK(i == 4);
  const std::vector<double> half{0.5, 0.5};
  const auto idx = bagging_sample(100000, half, 2);
  const double f0 = static_cast<double>(std::count(idx.begin(), idx.end(), 0u)) / 100000.0;
  CHECK(std::abs(f0 - 0.5) <= 0.01);
  CHECK_THROWS_AS(bagging_sample(10, std::vector<double>(3, 0.0), 1), NumericalError);
  CHECK_THROWS_AS(bagging_sample(0, half, 1), UsageError);
}

TEST_CASE("adaboost_round alpha and reweighting") {
  const std::vector<int> labels{0, 0, 1, 1};
  const auto u = SampleWeights::uniform(4).u;
  // err = 0.5, C = 2: chance level, alpha 0, rejected.
  auto r = adaboost_round(u, std::vector<int>{1, 0, 0, 1}, labels, 2);
  CHECK(r.err == doctest::Approx(0.5));
  CHECK(r.alpha == 0.0);
  CHECK(r.rejected);
  // err = 0.25 -> ln 3.
  r = adaboost_round(u, std::vector<int>{1, 0, 1, 1}, labels, 2);
  CHECK(r.alpha == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK_FALSE(r.rejected);
  CHECK(r.u[0] > r.u[1]);
  CHECK(r.u[1] == r.u[2]);
  SampleWeights{r.u}.validate();
  // Perfect member: capped.
  r = adaboost_round(u, labels, labels, 2);
  CHECK(r.alpha == doctest::Approx(std::log(1e6)));
  CHECK(r.u == u);
  // C = 10, err = 0.9 is rejected.
  std::vector<int> l10(10), p10(10);
  for (int i = 0; i < 10; ++i) {
    l10[i] = i;
    p10[i] = i == 0 ? 0 : (i + 1) % 10;
  }
  CHECK(adaboost_round(SampleWeights::uniform(10).u, p10, l10, 10).rejected);
  // Monotone decreasing in err below (C - 1) / C.
  double prev = std::numeric_limits<double>::infinity();
  for (int miss = 1; miss < 9; ++miss) {
    std::vector<int> p(l10);
    for (int i = 0; i < miss; ++i) p[i] = (l10[i] + 1) % 10;
    const auto rr = adaboost_round(SampleWeights::uniform(10).u, p, l10, 10);
    CHECK(rr.alpha < prev);
    prev = rr.alpha;
  }
  CHECK_THROWS_AS(adaboost_round({}, {}, {}, 2), UsageError);
}

TEST_CASE("aggregation rules") {
  const std::vector<RealTensor> two{rows({{0.6f, 0.4f}}), rows({{0.1f, 0.9f}})};
  const std::vector<double> ones{1.0, 1.0};
  const auto soft = aggregate_distributions(two, ones, Rule::kSoft);
  CHECK(soft.probs[0] == doctest::Approx(0.35));
  CHECK(soft.probs[1] == doctest::Approx(0.65));
  CHECK(soft.labels[0] == 1);

  // Votes 2-1 for class 0, summed probability favors class 1.
  const std::vector<RealTensor> three{rows({{0.51f, 0.49f}}), rows({{0.51f, 0.49f}}), rows({{0.0f, 1.0f}})};
  const std::vector<double> a3{1.0, 1.0, 1.0};
  const auto hard = aggregate_distributions(three, a3, Rule::kHard);
  CHECK(hard.labels[0] == 0);
  CHECK(hard.probs[0] == 1.0f);
  CHECK(hard.probs[1] == 0.0f);
  CHECK(aggregate_distributions(three, a3, Rule::kSoft).labels[0] == 1);

  // Tie goes to the lowest class.
  const std::vector<RealTensor> tie{rows({{0.2f, 0.8f, 0.0f}}), rows({{0.9f, 0.1f, 0.0f}})};
  CHECK(aggregate_distributions(tie, ones, Rule::kHard).labels[0] == 0);

  // Permutation and positive scaling of alphas leave labels unchanged.
  const std::vector<RealTensor> members{rows({{0.2f, 0.5f, 0.3f}, {0.7f, 0.2f, 0.1f}}),
                                        rows({{0.6f, 0.3f, 0.1f}, {0.1f, 0.1f, 0.8f}}),
                                        rows({{0.3f, 0.3f, 0.4f}, {0.3f, 0.4f, 0.3f}})};
  const std::vector<double> alphas{0.7, 1.3, 0.4};
  const std::vector<RealTensor> permuted{members[2], members[0], members[1]};
  const std::vector<double> palphas{0.4, 0.7, 1.3};
  std::vector<double> scaled(alphas);
  for (auto& a : scaled) a *= 3.5;
  for (Rule rule : {Rule::kHard, Rule::kSoft}) {
    const auto base = aggregate_distributions(members, alphas, rule);
    CHECK(aggregate_distributions(permuted, palphas, rule).labels == base.labels);
    CHECK(aggregate_distributions(members, scaled, rule).labels == base.labels);
    // A single member: both rules give its argmax.
    CHECK(aggregate_distributions(std::span(members).first(1), std::span(alphas).first(1), rule).labels ==
          std::vector<int>{1, 0});
  }
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(aggregate_distributions(members, alphas, Rule::kSoft).probs[i] ==
          doctest::Approx(aggregate_distributions(permuted, palphas, Rule::kSoft).probs[i]));
  }
}

TEST_CASE("K = 1 bagging is single-member training on the bootstrap sample") {
  const auto d = make_toy({ToyGenerator::kGaussianBlobs, 200, 2, 2, 0.2, 1});
  EnsembleOptions opt;
  opt.k = 1;
  opt.seed = 5;
  opt.train.epochs = 2;
  auto model = train_bagging(NetworkConfig::parse(kMlp), d, nullptr, opt);
  REQUIRE(model.members.size() == 1);
  CHECK(model.members[0].alpha == 1.0);
  // Reproduce the member by hand.
  const auto idx = bagging_sample(d.size(), SampleWeights::uniform(d.size()).u, derive_seed(5, 200));
  auto single = train_member(NetworkConfig::parse(kMlp), d.gather(idx), {}, nullptr, opt.train, member_seed(5, 0),
                             nullptr);
  CHECK(save_checkpoint(single.net) == save_checkpoint(model.members[0].net));
  const auto agg = aggregate(model, d.images);
  CHECK(agg.labels == model.members[0].net.predict(d.images));
}

TEST_CASE("warm restart starts from an exact copy of the predecessor") {
  const auto d = make_toy({ToyGenerator::kGaussianBlobs, 100, 2, 2, 0.2, 2});
  Network base(NetworkConfig::parse(kMlp), 3);
  TrainOptions zero;
  zero.epochs = 0;
  auto m = train_member(base.config(), d, {}, nullptr, zero, 11, &base);
  CHECK(save_checkpoint(m.net) == save_checkpoint(base));
}

TEST_CASE("bagged ensemble is at least as accurate as its best member, minus 0.01") {
  const auto all = make_toy({ToyGenerator::kGaussianBlobs, 1200, 3, 2, 0.3, 4});
  const auto [train, test] = split_train_test(all, 0.25, 1);
  EnsembleOptions opt;
  opt.k = 5;
  opt.seed = 1;
  opt.train.epochs = 4;
  auto model = train_bagging(NetworkConfig::parse(R"(input 2
fc width=16
batchnorm
sign
fc width=16 wbits=1
batchnorm
sign
fc width=3
)"),
                             train, &test, opt);
  double best = 0.0;
  for (auto& m : model.members) best = std::max(best, accuracy(m.net.predict(test.images), test.labels));
  const double ens = accuracy(aggregate(model, test.images).labels, test.labels);
  CHECK(ens >= best - 0.01);
}

TEST_CASE("boosting tiny nets on xor rings beats the best single member") {
  const auto all = make_toy({ToyGenerator::kXorRings, 800, 2, 2, 0.05, 3});
  const auto [train, test] = split_train_test(all, 0.25, 2);
  // Deliberately weak members: 2 hidden sign units.
  const auto cfg = NetworkConfig::parse("input 2\nfc width=2\nbatchnorm\nsign\nfc width=2\n");
  EnsembleOptions opt;
  opt.strategy = Strategy::kBoosting;
  opt.k = 3;
  opt.seed = 3;
  opt.rule = Rule::kSoft;
  opt.train.epochs = 10;
  opt.train.optimizer.lr = 0.01;
  auto model = train_boosting(cfg, train, &test, opt);
  double best = 0.0;
  for (auto& m : model.members) best = std::max(best, accuracy(m.net.predict(train.images), train.labels));
  for (auto& m : model.members) CHECK(m.alpha > 0.0);
  const double boosted = accuracy(aggregate(model, train.images).labels, train.labels);
  CHECK(model.members.size() >= 2);
  CHECK(boosted > best);
}

TEST_CASE("ensemble checkpoints are deterministic and round-trip") {
  const auto d = make_toy({ToyGenerator::kGaussianBlobs, 150, 2, 2, 0.2, 6});
  EnsembleOptions opt;
  opt.strategy = Strategy::kBoosting;
  opt.mode = TrainingMode::kWarmRestart;
  opt.k = 3;
  opt.seed = 7;
  opt.train.epochs = 2;
  const auto dir1 = temp_dir("ens1"), dir2 = temp_dir("ens2");
  auto m1 = train_ensemble(NetworkConfig::parse(kMlp), d, nullptr, opt);
  auto m2 = train_ensemble(NetworkConfig::parse(kMlp), d, nullptr, opt);
  save_ensemble(m1, dir1);
  save_ensemble(m2, dir2);
  CHECK(read_file(dir1 / "manifest.json") == read_file(dir2 / "manifest.json"));
  auto back = load_ensemble(dir1);
  CHECK(back.alphas() == m1.alphas());
  CHECK(aggregate(back, d.images).probs == aggregate(m1, d.images).probs);

  // Corrupt a member file.
  for (const auto& e : std::filesystem::directory_iterator(dir1)) {
    if (e.path().extension() == ".ckpt") {
      auto bytes = read_file(e.path());
      bytes[bytes.size() / 2] ^= 1;
      write_file(e.path(), bytes);
      break;
    }
  }
  CHECK_THROWS_AS(load_ensemble(dir1), DataError);
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}
