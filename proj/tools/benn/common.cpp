#include "common.hpp"

#include <charconv>
#include <ctime>
#include <iomanip>
#include <sstream>

#include "benn/common/error.hpp"
#include "benn/datio/datio.hpp"

#ifndef BENN_GIT_DESCRIBE
#define BENN_GIT_DESCRIBE "unknown"
#endif

namespace benn::cli {
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw UsageError("bad number for " + what + ": '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw UsageError("bad integer for " + what + ": '" + s + "'");
  return v;
}

struct Source {
  std::string kind;
  std::string rest;
};

Source split_source(const std::string& source) {
  const auto colon = source.find(':');
  if (colon == std::string::npos) throw UsageError("data source needs a kind prefix (toy:, idx:, cifar:): " + source);
  return {source.substr(0, colon), source.substr(colon + 1)};
}

Dataset load_file_source(const Source& s) {
  if (s.kind == "idx") {
    const auto parts = split(s.rest, ',');
    if (parts.size() != 2) throw UsageError("idx source is idx:<images>,<labels>");
    return load_idx(parts[0], parts[1]);
  }
  if (s.kind == "cifar") return load_cifar10_bin(s.rest);
  throw UsageError("unknown data source kind '" + s.kind + "'");
}

}  // namespace

DataSplit load_data(const std::string& source) {
  const Source s = split_source(source);
  DataSplit out;
  if (s.kind != "toy") {
    out.train = load_file_source(s);
    return out;
  }
  ToySpec spec;
  double test_fraction = 0.2;
  const auto colon = s.rest.find(':');
  spec.generator = parse_toy_generator(s.rest.substr(0, colon));
  if (colon != std::string::npos) {
    for (const auto& kv : split(s.rest.substr(colon + 1), ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("toy option needs key=value: '" + kv + "'");
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "n") spec.n = to_u64(val, key);
      else if (key == "classes") spec.classes = to_u64(val, key);
      else if (key == "dim") spec.dim = to_u64(val, key);
      else if (key == "noise") spec.noise = to_double(val, key);
      else if (key == "seed") spec.seed = to_u64(val, key);
      else if (key == "test") test_fraction = to_double(val, key);
      else throw UsageError("unknown toy option '" + key + "'");
    }
  }
  const Dataset all = make_toy(spec);
  if (test_fraction <= 0.0) {
    out.train = all;
    return out;
  }
  auto [train, test] = split_train_test(all, test_fraction, spec.seed);
  out.train = std::move(train);
  out.test = std::move(test);
  out.has_test = true;
  return out;
}

// Toy sources evaluate on their test split; file sources on the whole file.
Dataset load_single(const std::string& source) {
  auto d = load_data(source);
  return d.has_test ? d.test : d.train;
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  for (const auto& p : split(list, ',')) out.push_back(to_double(p, "list"));
  if (out.empty()) throw UsageError("empty list");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& list) {
  std::vector<std::size_t> out;
  for (const auto& p : split(list, ',')) out.push_back(to_u64(p, "list"));
  if (out.empty()) throw UsageError("empty list");
  return out;
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
    : out_(path, std::ios::binary), columns_(columns.size()) {
  if (!out_) throw DataError("cannot write " + path.string());
  write(columns);
}

void CsvWriter::write(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw UsageError("csv row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
  if (!out_) throw DataError("csv write failed");
}

RunManifest::RunManifest(int argc, char** argv) : t0_(std::chrono::steady_clock::now()) {
  for (int i = 0; i < argc; ++i) argv_.emplace_back(argv[i]);
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  started_ = s.str();
}

void RunManifest::write(const std::filesystem::path& dir) {
  nlohmann::ordered_json j;
  j["command_line"] = argv_;
  j["git_describe"] = BENN_GIT_DESCRIBE;
  for (auto& [k, v] : extra_.items()) j[k] = v;
  j["outputs"] = outputs_;
  j["timings"] = {{"started_utc", started_},
                  {"wall_seconds",
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count()}};
  std::ofstream out(dir / "run_manifest.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write run manifest in " + dir.string());
}

}  // namespace benn::cli
