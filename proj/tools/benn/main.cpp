#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "benn/analysis/analysis.hpp"
#include "benn/common/error.hpp"
#include "benn/common/hash.hpp"
#include "benn/nn/checkpoint.hpp"
#include "benn/nn/optimizer.hpp"
#include "common.hpp"

namespace fs = std::filesystem;
using namespace benn;
using namespace benn::cli;

namespace {

struct ModelOpts {
  std::string config;
  std::string profile;
  int q_bits = 2;
  std::string compression = "none";
};

struct TrainOpts {
  std::size_t epochs = 20;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::string optimizer = "adam";
  double weight_decay = 0.0;
  bool no_clip = false;
  std::size_t patience = 0;
};

void add_model_opts(CLI::App* app, ModelOpts& m) {
  app->add_option("--config", m.config, "layer table file")->required()->check(CLI::ExistingFile);
  app->add_option("--profile", m.profile, "weak-BNN profile applied to the table (SB|AB|WQB|AQB|IB|real)");
  app->add_option("--q-bits", m.q_bits, "bits for WQB/AQB quantizers");
  app->add_option("--compress", m.compression, "width compression (none|tiny|nano)");
}

void add_train_opts(CLI::App* app, TrainOpts& t) {
  app->add_option("--epochs", t.epochs, "training epochs");
  app->add_option("--batch-size", t.batch, "mini-batch size");
  app->add_option("--lr", t.lr, "learning rate");
  app->add_option("--optimizer", t.optimizer, "sgd|adam");
  app->add_option("--weight-decay", t.weight_decay, "L2 weight decay");
  app->add_flag("--no-clip-shadow", t.no_clip, "do not clip shadow weights to [-1, 1]");
  app->add_option("--patience", t.patience, "early-stop patience in epochs (0 = off)");
}

NetworkConfig build_config(const ModelOpts& m) {
  NetworkConfig c = NetworkConfig::load(m.config);
  if (!m.profile.empty()) c = apply_profile(c, parse_profile(m.profile), m.q_bits);
  return compress(c, parse_compression(m.compression));
}

TrainOptions train_options(const TrainOpts& t, std::uint64_t seed) {
  TrainOptions o;
  o.epochs = t.epochs;
  o.batch_size = t.batch;
  o.seed = seed;
  o.early_stop_patience = t.patience;
  o.optimizer.kind = parse_optimizer(t.optimizer);
  o.optimizer.lr = t.lr;
  o.optimizer.weight_decay = t.weight_decay;
  o.optimizer.clip_shadow = !t.no_clip;
  return o;
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + out + ": " + ec.message());
  return dir;
}

void write_history(CsvWriter& csv, const TrainHistory& h, std::optional<std::size_t> member) {
  for (std::size_t e = 0; e < h.epochs.size(); ++e) {
    const auto& r = h.epochs[e];
    if (member) csv.row(*member, e + 1, r.loss, r.train_accuracy, r.test_accuracy);
    else csv.row(e + 1, r.loss, r.train_accuracy, r.test_accuracy);
  }
}

// A trained model: a single network file or an ensemble directory.
struct Model {
  std::optional<Network> net;
  std::optional<EnsembleModel> ensemble;

  static Model load(const std::string& path) {
    Model m;
    if (fs::is_directory(path)) m.ensemble = load_ensemble(path);
    else m.net = load_model_file(path);
    return m;
  }
  std::vector<int> predict(const RealTensor& x) {
    if (net) return net->predict(x);
    return aggregate(*ensemble, x).labels;
  }
  std::size_t classes() { return net ? net->num_classes() : ensemble->members.at(0).net.num_classes(); }
};

std::string widths_text(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "x" : "") + std::to_string(w[i]);
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{"Binary neural network ensembles: training, evaluation and analysis"};
  app.require_subcommand(1);
  RunManifest manifest(argc, argv);
  std::string out = ".";
  std::string data;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  ModelOpts mopts;
  TrainOpts topts;

  // train
  auto* train = app.add_subcommand("train", "train one network");
  add_model_opts(train, mopts);
  add_train_opts(train, topts);
  train->add_option("--data", data, "dataset source")->required();
  train->add_option("--seed", seed, "seed");
  train->add_option("--out", out, "output directory");

  // ensemble train
  auto* ens = app.add_subcommand("ensemble", "ensemble commands");
  ens->require_subcommand(1);
  auto* ens_train = ens->add_subcommand("train", "train a bagged or boosted ensemble");
  std::string strategy, mode = "indep", rule = "soft";
  std::size_t k = 5;
  bool grad_reweight = false, unweighted = false;
  add_model_opts(ens_train, mopts);
  add_train_opts(ens_train, topts);
  ens_train->add_option("--data", data, "dataset source")->required();
  ens_train->add_option("--strategy", strategy, "bag|boost")->required();
  ens_train->add_option("--k", k, "ensemble size")->required();
  ens_train->add_option("--mode", mode, "indep|warm");
  ens_train->add_option("--rule", rule, "hard|soft");
  ens_train->add_option("--seed", seed, "seed")->required();
  ens_train->add_flag("--gradient-reweighting", grad_reweight, "boosting by loss factors instead of resampling");
  ens_train->add_flag("--unweighted-soft", unweighted, "soft rule ignores member weights");
  ens_train->add_option("--threads", threads, "workers for independent members");
  ens_train->add_option("--out", out, "output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy and confusion matrix");
  std::string model_path;
  eval->add_option("--model", model_path, "checkpoint, packed export, or ensemble directory")->required();
  eval->add_option("--data", data, "dataset source")->required();
  eval->add_option("--out", out, "output directory");

  // perturb
  auto* perturb = app.add_subcommand("perturb", "robustness under Gaussian perturbation");
  std::string variances = "0.001,0.01,0.1", target = "input";
  std::size_t trials = 10, weight_samples = 20;
  perturb->add_option("--model", model_path, "trained model (error-rate metric)");
  perturb->add_option("--random-config", mopts.config, "layer table for the random-weight protocol")
      ->check(CLI::ExistingFile);
  perturb->add_option("--profile", mopts.profile, "profile for --random-config");
  perturb->add_option("--q-bits", mopts.q_bits, "bits for WQB/AQB quantizers");
  perturb->add_option("--weight-samples", weight_samples, "random weight draws");
  perturb->add_option("--data", data, "dataset source")->required();
  perturb->add_option("--variance", variances, "comma-separated noise variances");
  perturb->add_option("--trials", trials, "noise draws per variance");
  perturb->add_option("--target", target, "input|weights");
  perturb->add_option("--seed", seed, "seed");
  perturb->add_option("--out", out, "output directory");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "variance analysis reports");
  analyze->require_subcommand(1);
  std::string sigmas = "1.5,1.0,0.5,0.1,0.01,0.001", ks = "2,4,8,16", widths = "16,8,1";
  std::size_t mc = 0, fan_in = 256, samples = 64;
  double sigma_w = 1.0, tolerance = 0.05;
  trials = 0;
  auto* btab = analyze->add_subcommand("b-table", "B and R against sigma");
  btab->add_option("--sigmas", sigmas, "comma-separated sigmas");
  btab->add_option("--mc-samples", mc, "Monte Carlo cross-check samples (0 = off)");
  btab->add_option("--seed", seed, "seed")->required();
  btab->add_option("--out", out, "output directory");
  auto* th1 = analyze->add_subcommand("theorem1", "one-neuron output variances and bagging");
  th1->add_option("--fan-in", fan_in, "fan-in");
  th1->add_option("--sigma-w", sigma_w, "weight std");
  th1->add_option("--sigmas", sigmas, "noise stds");
  th1->add_option("--ks", ks, "bagging sizes");
  th1->add_option("--trials", trials, "Monte Carlo trials")->required();
  th1->add_option("--tolerance", tolerance, "relative tolerance");
  th1->add_option("--seed", seed, "seed")->required();
  th1->add_option("--threads", threads, "workers (0 = all cores)");
  th1->add_option("--out", out, "output directory");
  auto* th2 = analyze->add_subcommand("theorem2", "multi-layer bound satisfaction");
  th2->add_option("--widths", widths, "layer widths n0,n1,...,nL");
  th2->add_option("--sigma-w", sigma_w, "weight std");
  th2->add_option("--sigmas", sigmas, "noise stds");
  th2->add_option("--trials", trials, "trials")->required();
  th2->add_option("--samples", samples, "draws per trial");
  th2->add_option("--seed", seed, "seed")->required();
  th2->add_option("--threads", threads, "workers (0 = all cores)");
  th2->add_option("--out", out, "output directory");

  // export
  auto* exp = app.add_subcommand("export", "packed inference export with size report");
  exp->add_option("--model", model_path, "float checkpoint")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  const fs::path dir = prepare_out(out);
  manifest.set("seed", seed);

  if (*train) {
    const NetworkConfig cfg = build_config(mopts);
    const DataSplit d = load_data(data);
    Network net(cfg, seed);
    const auto history = train_network(net, d.train, {}, d.has_test ? &d.test : nullptr, train_options(topts, seed));
    save_checkpoint(net, dir / "model.ckpt");
    CsvWriter csv(dir / "metrics.csv", {"epoch", "loss", "train_accuracy", "test_accuracy"});
    write_history(csv, history, std::nullopt);
    manifest.set("config_hash", hex64(cfg.hash()));
    manifest.add_output(dir / "model.ckpt");
    manifest.add_output(dir / "metrics.csv");
    if (!history.epochs.empty()) {
      std::cout << "final train accuracy " << history.epochs.back().train_accuracy << ", test accuracy "
                << history.epochs.back().test_accuracy << '\n';
    }
  } else if (*ens_train) {
    const NetworkConfig cfg = build_config(mopts);
    const DataSplit d = load_data(data);
    EnsembleOptions o;
    o.strategy = parse_strategy(strategy);
    o.k = k;
    o.mode = parse_training_mode(mode);
    o.rule = parse_rule(rule);
    o.seed = seed;
    o.train = train_options(topts, seed);
    o.train.record_test_probs = d.has_test;
    o.gradient_reweighting = grad_reweight;
    o.unweighted_soft = unweighted;
    o.threads = threads;
    EnsembleModel model = train_ensemble(cfg, d.train, d.has_test ? &d.test : nullptr, o);
    const fs::path edir = dir / "ensemble";
    manifest.add_output(save_ensemble(model, edir));
    CsvWriter members(dir / "members.csv", {"member", "seed", "alpha", "err"});
    CsvWriter metrics(dir / "metrics.csv", {"member", "epoch", "loss", "train_accuracy", "test_accuracy"});
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < model.members.size(); ++i) {
      const auto& m = model.members[i];
      members.row(i, m.seed, m.alpha, m.err);
      write_history(metrics, m.history, i);
      seeds.push_back(m.seed);
    }
    manifest.add_output(dir / "members.csv");
    manifest.add_output(dir / "metrics.csv");
    if (d.has_test) {
      CsvWriter ecsv(dir / "ensemble_metrics.csv", {"epoch", "test_accuracy"});
      const auto acc = ensemble_epoch_accuracy(model, d.test.labels);
      for (std::size_t e = 0; e < acc.size(); ++e) ecsv.row(e + 1, acc[e]);
      manifest.add_output(dir / "ensemble_metrics.csv");
      const auto pred = aggregate(model, d.test.images).labels;
      std::cout << "ensemble test accuracy " << accuracy(pred, d.test.labels) << '\n';
    }
    manifest.set("config_hash", hex64(cfg.hash()));
    manifest.set("member_seeds", seeds);
    manifest.set("alphas", model.alphas());
    std::cout << model.members.size() << " members, " << model.rejected_errors.size() << " rejected rounds\n";
  } else if (*eval) {
    Model model = Model::load(model_path);
    const Dataset d = load_single(data);
    const std::size_t c = model.classes();
    const auto pred = model.predict(d.images);
    std::vector<std::size_t> confusion(c * c, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (d.labels[i] < 0 || static_cast<std::size_t>(d.labels[i]) >= c) {
        throw DataError("label " + std::to_string(d.labels[i]) + " outside the model's " + std::to_string(c) +
                        " classes");
      }
      ++confusion[static_cast<std::size_t>(d.labels[i]) * c + static_cast<std::size_t>(pred[i])];
    }
    const double acc = accuracy(pred, d.labels);
    CsvWriter ecsv(dir / "eval.csv", {"n", "accuracy"});
    ecsv.row(d.size(), acc);
    CsvWriter ccsv(dir / "confusion.csv", {"true_class", "predicted_class", "count"});
    for (std::size_t t = 0; t < c; ++t)
      for (std::size_t p = 0; p < c; ++p) ccsv.row(t, p, confusion[t * c + p]);
    manifest.add_output(dir / "eval.csv");
    manifest.add_output(dir / "confusion.csv");
    std::cout << "accuracy " << acc << " on " << d.size() << " examples\n";
  } else if (*perturb) {
    if (model_path.empty() == mopts.config.empty()) {
      throw UsageError("perturb needs exactly one of --model or --random-config");
    }
    PerturbationSpec spec;
    spec.target = target == "input" ? PerturbTarget::kInput
                  : target == "weights"
                      ? PerturbTarget::kWeights
                      : throw UsageError("unknown perturbation target '" + target + "' (input|weights)");
    spec.trials = trials;
    spec.seed = seed;
    const Dataset d = load_single(data);
    CsvWriter csv(dir / "robustness.csv", {"protocol", "target", "variance", "trials", "metric", "se"});
    std::optional<Model> model;
    NetworkConfig cfg;
    if (!model_path.empty()) model = Model::load(model_path);
    else cfg = build_config(mopts);
    for (double v : parse_doubles(variances)) {
      spec.variance = v;
      Estimate e;
      if (model) {
        e = robustness_trained([&](const RealTensor& x) { return model->predict(x); }, d, spec);
      } else {
        e = robustness_random(cfg, spec, d.images, weight_samples);
      }
      csv.row(model ? "trained" : "random", target, v, spec.trials, e.value, e.se);
      std::cout << "variance " << v << ": " << e.value << " +- " << e.se << '\n';
    }
    manifest.add_output(dir / "robustness.csv");
  } else if (*btab) {
    const auto rows = b_table(parse_doubles(sigmas), mc, seed);
    CsvWriter csv(dir / "b_table.csv", {"sigma", "b", "r", "b_over_r", "b_mc", "b_mc_se"});
    std::cout << "sigma        B            R            B/R\n";
    for (const auto& r : rows) {
      csv.row(r.sigma, r.b, r.r, r.b / r.r, r.b_mc.value, r.b_mc.se);
      std::printf("%-12g %-12.6g %-12.6g %-12.6g\n", r.sigma, r.b, r.r, r.b / r.r);
    }
    manifest.add_output(dir / "b_table.csv");
  } else if (*th1) {
    const auto kv = parse_sizes(ks);
    CsvWriter csv(dir / "theorem1.csv", {"sigma", "regime", "k", "measured", "se", "expected", "ratio"});
    CsvWriter tcsv(dir / "theorem1_thresholds.csv", {"sigma", "regime", "threshold_k"});
    nlohmann::ordered_json warnings = nlohmann::ordered_json::array();
    for (double s : parse_doubles(sigmas)) {
      const auto rep = verify_theorem1(fan_in, sigma_w, s, kv, trials, seed, tolerance, threads);
      auto emit = [&](const char* regime, std::size_t kk, const Estimate& e, double expected) {
        csv.row(s, regime, kk, e.value, e.se, expected, e.value / expected);
        std::printf("sigma %-8g %-10s K=%-3zu %-12.6g +- %-10.3g expected %-12.6g\n", s, regime, kk, e.value, e.se,
                    expected);
      };
      emit("real", 1, rep.real, rep.expected_real());
      emit("activation", 1, rep.activation, rep.expected_activation());
      emit("weight", 1, rep.weight, rep.expected_weight());
      emit("both", 1, rep.both, rep.expected_both());
      for (const auto& b : rep.bagging) {
        const double kk = static_cast<double>(b.k);
        emit("activation", b.k, b.activation, rep.expected_activation() / kk);
        emit("weight", b.k, b.weight, rep.expected_weight() / kk);
        emit("both", b.k, b.both, rep.expected_both() / kk);
      }
      tcsv.row(s, "activation", rep.threshold_activation());
      tcsv.row(s, "weight", rep.threshold_weight());
      tcsv.row(s, "both", rep.threshold_both());
      for (const auto& w : rep.warnings) {
        std::cerr << "warning: " << w << '\n';
        warnings.push_back(w);
      }
    }
    manifest.set("warnings", warnings);
    manifest.add_output(dir / "theorem1.csv");
    manifest.add_output(dir / "theorem1_thresholds.csv");
  } else if (*th2) {
    const auto wv = parse_sizes(widths);
    CsvWriter csv(dir / "theorem2.csv",
                  {"widths", "sigma", "regime", "bound", "satisfied_fraction", "pooled", "pooled_se"});
    for (double s : parse_doubles(sigmas)) {
      const auto rep = verify_theorem2(wv, sigma_w, s, trials, samples, seed, threads);
      for (const auto& r : rep.regimes) {
        csv.row(widths_text(wv), s, r.name, r.bound, r.satisfied_fraction, r.pooled.value, r.pooled.se);
        std::printf("sigma %-8g %-10s bound %-12.6g pooled %-12.6g satisfied %.4f\n", s, r.name.c_str(), r.bound,
                    r.pooled.value, r.satisfied_fraction);
      }
    }
    manifest.add_output(dir / "theorem2.csv");
  } else if (*exp) {
    Network net = load_checkpoint_file(model_path);
    const auto packed = export_packed(net);
    const fs::path target_path = dir / (fs::path(model_path).stem().string() + ".bpack");
    {
      std::ofstream f(target_path, std::ios::binary);
      f.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
      if (!f) throw DataError("cannot write " + target_path.string());
    }
    const auto float_bytes = fs::file_size(model_path);
    const double ratio = static_cast<double>(float_bytes) / static_cast<double>(packed.size());
    CsvWriter csv(dir / "export.csv", {"float_bytes", "packed_bytes", "ratio"});
    csv.row(static_cast<std::uint64_t>(float_bytes), packed.size(), ratio);
    manifest.add_output(target_path);
    manifest.add_output(dir / "export.csv");
    std::cout << "float checkpoint " << float_bytes << " bytes, packed " << packed.size() << " bytes, ratio "
              << ratio << "x\n";
  }
  manifest.write(dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed manifest: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  }
}
