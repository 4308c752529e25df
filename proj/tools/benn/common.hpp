#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "benn/dataset.hpp"
#include "benn/ensemble/ensemble.hpp"
#include "benn/nn/config.hpp"
#include "json.hpp"

namespace benn::cli {

// Dataset sources on the command line:
//   toy:<generator>[:n=..,classes=..,dim=..,noise=..,seed=..,test=..]
//   idx:<images file>,<labels file>
//   cifar:<batch file>
// Toy sources are split into train/test with the `test` fraction (default
// 0.2); file sources are used whole.
struct DataSplit {
  Dataset train;
  Dataset test;
  bool has_test = false;
};

DataSplit load_data(const std::string& source);
Dataset load_single(const std::string& source);

std::vector<double> parse_doubles(const std::string& list);
std::vector<std::size_t> parse_sizes(const std::string& list);

// Shortest round-trip text for a double.
std::string num(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns);
  template <typename... T>
  void row(const T&... cells) {
    std::vector<std::string> v{cell(cells)...};
    write(v);
  }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  template <typename I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }
  void write(const std::vector<std::string>& cells);

  std::ofstream out_;
  std::size_t columns_;
};

// One per invocation, written to <out>/run_manifest.json.
class RunManifest {
 public:
  RunManifest(int argc, char** argv);
  void set(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }
  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }
  void write(const std::filesystem::path& dir);

 private:
  std::vector<std::string> argv_;
  std::string started_;
  std::chrono::steady_clock::time_point t0_;
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
  std::vector<std::string> outputs_;
};

}  // namespace benn::cli
