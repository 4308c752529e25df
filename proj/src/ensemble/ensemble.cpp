#include "benn/ensemble/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "benn/common/binary_io.hpp"
#include "benn/common/error.hpp"
#include "benn/common/hash.hpp"
#include "benn/common/parallel.hpp"
#include "benn/common/rng.hpp"
#include "benn/nn/checkpoint.hpp"

namespace benn {

SampleWeights SampleWeights::uniform(std::size_t m) {
  if (m == 0) throw UsageError("sample weights need at least one example");
  return {std::vector<double>(m, 1.0 / static_cast<double>(m))};
}

void SampleWeights::validate() const {
  double s = 0.0;
  for (double v : u) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericalError("sample weight is negative or non-finite");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw NumericalError("sample weights sum to " + std::to_string(s));
}

std::vector<std::size_t> bagging_sample(std::size_t m, std::span<const double> u, std::uint64_t seed) {
  if (m == 0) throw UsageError("bagging_sample: M must be at least 1");
  if (u.empty()) throw UsageError("bagging_sample: empty weight vector");
  std::vector<double> cdf(u.size());
  double total = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] >= 0.0) || !std::isfinite(u[i])) throw NumericalError("bagging_sample: invalid weight");
    total += u[i];
    cdf[i] = total;
  }
  if (!(total > 0.0)) throw NumericalError("bagging_sample: weights have no positive mass");
  Rng rng = make_rng(seed, 0xba6);
  std::vector<std::size_t> out(m);
  for (auto& o : out) {
    const double r = uniform01(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    std::size_t i = static_cast<std::size_t>(it - cdf.begin());
    if (i >= cdf.size()) i = cdf.size() - 1;
    // Skip zero-weight slots that share the boundary.
    while (u[i] == 0.0 && i + 1 < cdf.size()) ++i;
    o = i;
  }
  return out;
}

BoostRound adaboost_round(std::span<const double> u, std::span<const int> predictions, std::span<const int> labels,
                          std::size_t num_classes) {
  if (predictions.empty() || predictions.size() != labels.size() || u.size() != labels.size()) {
    throw UsageError("adaboost_round: need equally many weights, predictions and labels (non-empty)");
  }
  if (num_classes < 2) throw UsageError("adaboost_round: need at least 2 classes");
  BoostRound r;
  double total = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    total += u[i];
    if (predictions[i] != labels[i]) r.err += u[i];
  }
  r.err /= total;
  const double c = static_cast<double>(num_classes);
  r.u.assign(u.begin(), u.end());
  if (r.err >= (c - 1.0) / c) {
    r.rejected = true;
    r.alpha = 0.0;
    return r;
  }
  r.alpha = r.err <= 0.0 ? kMaxAlpha : std::min(kMaxAlpha, std::log((1.0 - r.err) / r.err) + std::log(c - 1.0));
  const double boost = std::exp(r.alpha);
  double s = 0.0;
  for (std::size_t i = 0; i < r.u.size(); ++i) {
    if (predictions[i] != labels[i]) r.u[i] *= boost;
    s += r.u[i];
  }
  for (auto& v : r.u) v /= s;
  return r;
}

Strategy parse_strategy(std::string_view s) {
  if (s == "bag" || s == "bagging") return Strategy::kBagging;
  if (s == "boost" || s == "boosting") return Strategy::kBoosting;
  throw UsageError("unknown strategy '" + std::string(s) + "' (bag|boost)");
}

TrainingMode parse_training_mode(std::string_view s) {
  if (s == "indep" || s == "independent") return TrainingMode::kIndependent;
  if (s == "warm" || s == "warm_restart") return TrainingMode::kWarmRestart;
  throw UsageError("unknown training mode '" + std::string(s) + "' (indep|warm)");
}

Rule parse_rule(std::string_view s) {
  if (s == "hard") return Rule::kHard;
  if (s == "soft") return Rule::kSoft;
  throw UsageError("unknown rule '" + std::string(s) + "' (hard|soft)");
}

std::string_view strategy_name(Strategy s) { return s == Strategy::kBagging ? "bag" : "boost"; }
std::string_view training_mode_name(TrainingMode m) { return m == TrainingMode::kIndependent ? "indep" : "warm"; }
std::string_view rule_name(Rule r) { return r == Rule::kHard ? "hard" : "soft"; }

std::vector<double> EnsembleModel::alphas() const {
  std::vector<double> a;
  for (const auto& m : members) a.push_back(m.alpha);
  return a;
}

Aggregate aggregate_distributions(std::span<const RealTensor> member_probs, std::span<const double> alphas,
                                  Rule rule) {
  if (member_probs.empty() || member_probs.size() != alphas.size()) {
    throw UsageError("aggregate: need one alpha per member and at least one member");
  }
  const Shape& shape = member_probs.front().shape();
  if (shape.size() != 2) throw UsageError("aggregate: member outputs must be [N x C]");
  const std::size_t n = shape[0], c = shape[1];
  for (const auto& p : member_probs) {
    if (p.shape() != shape) throw UsageError("aggregate: member outputs differ in shape");
  }
  std::vector<double> acc(n * c, 0.0);
  double alpha_sum = 0.0;
  for (std::size_t k = 0; k < member_probs.size(); ++k) {
    const double a = alphas[k];
    alpha_sum += a;
    const RealTensor& p = member_probs[k];
    if (rule == Rule::kSoft) {
      for (std::size_t i = 0; i < n * c; ++i) acc[i] += a * p[i];
    } else {
      for (std::size_t r = 0; r < n; ++r) {
        const float* row = p.data() + r * c;
        acc[r * c + static_cast<std::size_t>(std::max_element(row, row + c) - row)] += a;
      }
    }
  }
  if (!(alpha_sum > 0.0)) throw NumericalError("aggregate: member weights sum to zero");
  Aggregate out;
  out.probs = RealTensor({n, c});
  out.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = acc.data() + r * c;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    out.labels[r] = static_cast<int>(best);
    for (std::size_t j = 0; j < c; ++j) {
      out.probs[r * c + j] = rule == Rule::kSoft ? static_cast<float>(row[j] / alpha_sum) : (j == best ? 1.0f : 0.0f);
    }
  }
  return out;
}

Aggregate aggregate(EnsembleModel& model, const RealTensor& x) {
  std::vector<RealTensor> probs;
  std::vector<double> alphas;
  for (auto& m : model.members) {
    probs.push_back(m.net.predict_proba(x));
    alphas.push_back(model.unweighted_soft && model.rule == Rule::kSoft ? 1.0 : m.alpha);
  }
  return aggregate_distributions(probs, alphas, model.rule);
}

std::uint64_t member_seed(std::uint64_t seed, std::size_t k) { return derive_seed(seed, 100 + k); }

namespace {

std::uint64_t bootstrap_seed(std::uint64_t seed, std::size_t k) { return derive_seed(seed, 200 + k); }

}  // namespace

Member train_member(const NetworkConfig& config, const Dataset& train, std::span<const double> factors,
                    const Dataset* test, const TrainOptions& options, std::uint64_t seed, const Network* init) {
  std::uint64_t s = seed;
  for (int attempt = 0;; ++attempt) {
    try {
      Member m{init ? *init : Network(config, s), 1.0, 0.0, s, {}};
      TrainOptions o = options;
      o.seed = s;
      m.history = train_network(m.net, train, factors, test, o);
      return m;
    } catch (const NumericalError& e) {
      if (attempt == 1) throw NumericalError(std::string("member training diverged twice: ") + e.what());
      s = derive_seed(seed, 0xd1e);
    }
  }
}

EnsembleModel train_bagging(const NetworkConfig& config, const Dataset& train, const Dataset* test,
                            const EnsembleOptions& options) {
  if (options.k == 0) throw UsageError("ensemble size K must be at least 1");
  EnsembleModel model;
  model.strategy = Strategy::kBagging;
  model.mode = options.mode;
  model.rule = options.rule;
  model.unweighted_soft = options.unweighted_soft;
  model.seed = options.seed;
  const auto u = SampleWeights::uniform(train.size());
  auto sample = [&](std::size_t k) {
    return train.gather(bagging_sample(train.size(), u.u, bootstrap_seed(options.seed, k)));
  };
  if (options.mode == TrainingMode::kIndependent) {
    std::vector<std::optional<Member>> slots(options.k);
    parallel_for(options.k, options.threads, [&](std::size_t k) {
      slots[k] = train_member(config, sample(k), {}, test, options.train, member_seed(options.seed, k), nullptr);
    });
    for (auto& s : slots) model.members.push_back(std::move(*s));
  } else {
    for (std::size_t k = 0; k < options.k; ++k) {
      const Network* init = k == 0 ? nullptr : &model.members.back().net;
      Member m = train_member(config, sample(k), {}, test, options.train, member_seed(options.seed, k), init);
      model.members.push_back(std::move(m));
    }
  }
  return model;
}

EnsembleModel train_boosting(const NetworkConfig& config, const Dataset& train, const Dataset* test,
                             const EnsembleOptions& options) {
  if (options.k == 0) throw UsageError("ensemble size K must be at least 1");
  EnsembleModel model;
  model.strategy = Strategy::kBoosting;
  model.mode = options.mode;
  model.rule = options.rule;
  model.unweighted_soft = options.unweighted_soft;
  model.seed = options.seed;
  SampleWeights u = SampleWeights::uniform(train.size());
  const double m = static_cast<double>(train.size());
  std::optional<Network> previous;
  for (std::size_t k = 0; k < options.k; ++k) {
    const Network* init = options.mode == TrainingMode::kWarmRestart && previous ? &*previous : nullptr;
    Member member;
    if (options.gradient_reweighting) {
      std::vector<double> factors(u.u.size());
      for (std::size_t i = 0; i < factors.size(); ++i) factors[i] = m * u.u[i];
      member = train_member(config, train, factors, test, options.train, member_seed(options.seed, k), init);
    } else {
      const Dataset resampled = train.gather(bagging_sample(train.size(), u.u, bootstrap_seed(options.seed, k)));
      member = train_member(config, resampled, {}, test, options.train, member_seed(options.seed, k), init);
    }
    previous = member.net;
    const auto predictions = member.net.predict(train.images);
    BoostRound round = adaboost_round(u.u, predictions, train.labels, train.num_classes);
    member.err = round.err;
    if (round.rejected) {
      model.rejected_errors.push_back(round.err);
      continue;
    }
    member.alpha = round.alpha;
    u.u = std::move(round.u);
    u.validate();
    model.members.push_back(std::move(member));
  }
  if (model.members.empty()) {
    std::string errs;
    for (double e : model.rejected_errors) errs += (errs.empty() ? "" : ", ") + std::to_string(e);
    throw NumericalError("boosting: all " + std::to_string(options.k) +
                         " members were no better than chance (weighted errors: " + errs + ")");
  }
  return model;
}

EnsembleModel train_ensemble(const NetworkConfig& config, const Dataset& train, const Dataset* test,
                             const EnsembleOptions& options) {
  return options.strategy == Strategy::kBagging ? train_bagging(config, train, test, options)
                                                : train_boosting(config, train, test, options);
}

std::vector<double> ensemble_epoch_accuracy(const EnsembleModel& model, std::span<const int> test_labels) {
  std::size_t epochs = std::numeric_limits<std::size_t>::max();
  for (const auto& m : model.members) epochs = std::min(epochs, m.history.test_probs.size());
  if (model.members.empty() || epochs == 0) throw UsageError("ensemble_epoch_accuracy: no recorded test outputs");
  std::vector<double> alphas;
  for (const auto& m : model.members) alphas.push_back(model.unweighted_soft && model.rule == Rule::kSoft ? 1.0 : m.alpha);
  std::vector<double> out;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::vector<RealTensor> probs;
    for (const auto& m : model.members) probs.push_back(m.history.test_probs[e]);
    out.push_back(accuracy(aggregate_distributions(probs, alphas, model.rule).labels, test_labels));
  }
  return out;
}

std::filesystem::path save_ensemble(EnsembleModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["format"] = "benn-ensemble";
  j["version"] = 1;
  j["strategy"] = strategy_name(model.strategy);
  j["mode"] = training_mode_name(model.mode);
  j["rule"] = rule_name(model.rule);
  j["unweighted_soft"] = model.unweighted_soft;
  j["k"] = model.members.size();
  j["seed"] = model.seed;
  j["alphas"] = model.alphas();
  j["rejected_errors"] = model.rejected_errors;
  if (!model.members.empty()) j["config_hash"] = hex64(model.members.front().net.config().hash());
  auto members = nlohmann::ordered_json::array();
  for (auto& m : model.members) {
    const auto bytes = save_checkpoint(m.net);
    const std::string hash = hex64(fnv1a64(std::as_bytes(std::span(bytes))));
    const std::string file = hash + ".ckpt";
    write_file(dir / file, bytes);
    members.push_back({{"file", file}, {"hash", hash}, {"seed", m.seed}, {"alpha", m.alpha}, {"err", m.err}});
  }
  j["members"] = members;
  const auto path = dir / "manifest.json";
  write_text_file(path, j.dump(2) + "\n");
  return path;
}

EnsembleModel load_ensemble(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "manifest.json" : dir;
  const auto bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
    if (j.at("format") != "benn-ensemble") throw DataError(path.string() + ": not an ensemble manifest");
    if (j.at("version") != 1) throw DataError(path.string() + ": unsupported manifest version");
    EnsembleModel model;
    model.strategy = parse_strategy(j.at("strategy").get<std::string>());
    model.mode = parse_training_mode(j.at("mode").get<std::string>());
    model.rule = parse_rule(j.at("rule").get<std::string>());
    model.unweighted_soft = j.value("unweighted_soft", false);
    model.seed = j.at("seed").get<std::uint64_t>();
    model.rejected_errors = j.value("rejected_errors", std::vector<double>{});
    for (const auto& mj : j.at("members")) {
      const auto ck = read_file(path.parent_path() / mj.at("file").get<std::string>());
      if (hex64(fnv1a64(std::as_bytes(std::span(ck)))) != mj.at("hash").get<std::string>()) {
        throw DataError("ensemble member " + mj.at("file").get<std::string>() + ": content hash mismatch");
      }
      Member m{load_checkpoint(ck), mj.at("alpha").get<double>(), mj.value("err", 0.0),
               mj.at("seed").get<std::uint64_t>(), {}};
      model.members.push_back(std::move(m));
    }
    if (model.members.empty()) throw DataError(path.string() + ": ensemble has no members");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed manifest (" + e.what() + ")");
  }
}

}  // namespace benn
