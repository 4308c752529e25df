#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "benn/dataset.hpp"
#include "benn/nn/network.hpp"
#include "benn/nn/trainer.hpp"

namespace benn {

// Probability distribution over the M training examples.
struct SampleWeights {
  std::vector<double> u;

  static SampleWeights uniform(std::size_t m);
  std::size_t size() const { return u.size(); }
  // Throws NumericalError unless u >= 0 and sum(u) = 1 within 1e-9.
  void validate() const;
};

// M i.i.d. draws from categorical(u) by inverse CDF. Throws NumericalError
// when u has no positive mass.
std::vector<std::size_t> bagging_sample(std::size_t m, std::span<const double> u, std::uint64_t seed);

struct BoostRound {
  double err = 0.0;
  double alpha = 0.0;
  bool rejected = false;
  std::vector<double> u;  // updated weights (unchanged when rejected)
};

// Largest member weight; a perfect member gets this instead of infinity.
inline constexpr double kMaxAlpha = 13.815510557964274;  // ln(1e6)

// SAMME round: err = sum of u over misclassified rows,
// alpha = ln((1 - err) / err) + ln(C - 1) capped at ln(1e6),
// u_i <- u_i * exp(alpha * [miss_i]) renormalized. Rejected when
// err >= (C - 1) / C.
BoostRound adaboost_round(std::span<const double> u, std::span<const int> predictions, std::span<const int> labels,
                          std::size_t num_classes);

enum class Strategy { kBagging, kBoosting };
enum class TrainingMode { kIndependent, kWarmRestart };
enum class Rule { kHard, kSoft };

Strategy parse_strategy(std::string_view s);
TrainingMode parse_training_mode(std::string_view s);
Rule parse_rule(std::string_view s);
std::string_view strategy_name(Strategy s);
std::string_view training_mode_name(TrainingMode m);
std::string_view rule_name(Rule r);

struct EnsembleOptions {
  Strategy strategy = Strategy::kBagging;
  std::size_t k = 5;
  TrainingMode mode = TrainingMode::kIndependent;
  Rule rule = Rule::kSoft;
  std::uint64_t seed = 0;
  TrainOptions train;
  // Boosting: scale per-example losses by M * u_i on the full set instead
  // of resampling by u.
  bool gradient_reweighting = false;
  // Soft rule: plain mean of member probabilities instead of alpha-weighted.
  bool unweighted_soft = false;
  // Workers for independent bagging members (results do not depend on it).
  unsigned threads = 1;
};

struct Member {
  Network net;
  double alpha = 1.0;
  double err = 0.0;         // boosting: weighted training error
  std::uint64_t seed = 0;   // initialization / data-order seed actually used
  TrainHistory history;
};

struct EnsembleModel {
  Strategy strategy = Strategy::kBagging;
  TrainingMode mode = TrainingMode::kIndependent;
  Rule rule = Rule::kSoft;
  bool unweighted_soft = false;
  std::uint64_t seed = 0;
  std::vector<Member> members;
  // Boosting rounds that were dropped, with their errors.
  std::vector<double> rejected_errors;

  std::vector<double> alphas() const;
};

struct Aggregate {
  RealTensor probs;  // soft: weighted mean; hard: one-hot of the vote winner
  std::vector<int> labels;
};

// Combines member distributions [N x C] with weights alpha. Ties go to the
// lowest class index.
Aggregate aggregate_distributions(std::span<const RealTensor> member_probs, std::span<const double> alphas, Rule rule);
Aggregate aggregate(EnsembleModel& model, const RealTensor& x);

// Seeds used for member k of an ensemble seeded with `seed`.
std::uint64_t member_seed(std::uint64_t seed, std::size_t k);

// Trains one network (retrying once with a fresh seed on NumericalError).
// `init` (warm restart) replaces random initialization when given.
Member train_member(const NetworkConfig& config, const Dataset& train, std::span<const double> factors,
                    const Dataset* test, const TrainOptions& options, std::uint64_t seed, const Network* init);

EnsembleModel train_bagging(const NetworkConfig& config, const Dataset& train, const Dataset* test,
                            const EnsembleOptions& options);
EnsembleModel train_boosting(const NetworkConfig& config, const Dataset& train, const Dataset* test,
                             const EnsembleOptions& options);
EnsembleModel train_ensemble(const NetworkConfig& config, const Dataset& train, const Dataset* test,
                             const EnsembleOptions& options);

// Test accuracy of the ensemble built from every member's epoch-e snapshot,
// for each recorded epoch e (needs TrainOptions::record_test_probs).
std::vector<double> ensemble_epoch_accuracy(const EnsembleModel& model, std::span<const int> test_labels);

// Writes manifest.json plus one checkpoint per member named by the FNV-1a
// hash of its bytes. Returns the manifest path.
std::filesystem::path save_ensemble(EnsembleModel& model, const std::filesystem::path& dir);
EnsembleModel load_ensemble(const std::filesystem::path& dir);

}  // namespace benn
