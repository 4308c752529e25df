#include "benn/nn/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "benn/common/error.hpp"
#include "benn/common/hash.hpp"

namespace benn {
namespace {

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::kConv, "conv"},       {LayerKind::kFc, "fc"},
    {LayerKind::kBatchNorm, "batchnorm"}, {LayerKind::kRelu, "relu"},
    {LayerKind::kHardTanh, "hardtanh"}, {LayerKind::kSign, "sign"},
    {LayerKind::kQuant, "quant"},     {LayerKind::kMaxPool, "maxpool"},
    {LayerKind::kAvgPool, "avgpool"}, {LayerKind::kDropout, "dropout"},
};

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw UsageError("config line " + std::to_string(line) + ": " + what);
}

std::size_t parse_size(std::string_view v, std::size_t line, std::string_view key) {
  std::size_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    parse_fail(line, "bad integer for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view v, std::size_t line, std::string_view key) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    parse_fail(line, "bad number for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

Shape parse_dims(std::string_view v, std::size_t line) {
  Shape s;
  std::size_t start = 0;
  while (start <= v.size()) {
    const std::size_t x = v.find('x', start);
    const auto part = v.substr(start, x == std::string_view::npos ? v.size() - start : x - start);
    s.push_back(parse_size(part, line, "input"));
    if (x == std::string_view::npos) break;
    start = x + 1;
  }
  return s;
}

bool valid_weight_bits(int b) { return b == 1 || b == 32 || (b >= 2 && b <= 8); }

void validate(const LayerConfig& l, std::size_t line) {
  if (l.has_weights()) {
    if (l.depth == 0) parse_fail(line, "weight layer needs a positive depth/width");
    if (!valid_weight_bits(l.weight_bits)) parse_fail(line, "wbits must be 1, 2..8 or 32");
  }
  if ((l.kind == LayerKind::kConv || l.kind == LayerKind::kMaxPool || l.kind == LayerKind::kAvgPool) && !l.global &&
      (l.kernel == 0 || l.stride == 0)) {
    parse_fail(line, "kernel and stride must be positive");
  }
  if (l.kind == LayerKind::kQuant && (l.bits < 2 || l.bits > 8)) parse_fail(line, "quant bits must be in 2..8");
  if (l.kind == LayerKind::kDropout && (l.p < 0.0 || l.p >= 1.0)) parse_fail(line, "dropout p must be in [0, 1)");
  if (l.kind == LayerKind::kBatchNorm && (l.eps <= 0.0 || l.momentum < 0.0 || l.momentum > 1.0)) {
    parse_fail(line, "batchnorm needs eps > 0 and momentum in [0, 1]");
  }
}

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

NetworkConfig NetworkConfig::parse(std::string_view text) {
  NetworkConfig cfg;
  bool have_input = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    std::string head;
    if (!(ls >> head)) continue;
    std::vector<std::string> tokens;
    for (std::string t; ls >> t;) tokens.push_back(t);

    if (head == "name") {
      if (tokens.size() != 1) parse_fail(line_no, "name takes one token");
      cfg.name = tokens[0];
      continue;
    }
    if (head == "input") {
      if (tokens.size() != 1) parse_fail(line_no, "input takes one CxHxW or D token");
      cfg.input = parse_dims(tokens[0], line_no);
      have_input = true;
      continue;
    }

    LayerConfig l;
    bool known = false;
    for (const auto& kn : kKindNames) {
      if (kn.name == head) {
        l.kind = kn.kind;
        known = true;
      }
    }
    if (!known) parse_fail(line_no, "unknown layer type '" + head + "'");

    bool bias_set = false;
    for (const auto& tok : tokens) {
      if (tok == "global" && l.kind == LayerKind::kAvgPool) {
        l.global = true;
        continue;
      }
      const auto eq = tok.find('=');
      if (eq == std::string::npos) parse_fail(line_no, "expected key=value, got '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string_view val = std::string_view(tok).substr(eq + 1);
      const bool weighted = l.has_weights();
      const bool spatial = l.kind == LayerKind::kConv || l.kind == LayerKind::kMaxPool || l.kind == LayerKind::kAvgPool;
      if ((key == "depth" && l.kind == LayerKind::kConv) || (key == "width" && l.kind == LayerKind::kFc)) {
        l.depth = parse_size(val, line_no, key);
      } else if (key == "kernel" && spatial) {
        l.kernel = parse_size(val, line_no, key);
      } else if (key == "stride" && spatial) {
        l.stride = parse_size(val, line_no, key);
      } else if (key == "pad" && spatial) {
        l.pad = parse_size(val, line_no, key);
      } else if (key == "wbits" && weighted) {
        l.weight_bits = static_cast<int>(parse_size(val, line_no, key));
      } else if (key == "bias" && weighted) {
        l.bias = parse_size(val, line_no, key) != 0;
        bias_set = true;
      } else if (key == "eps" && l.kind == LayerKind::kBatchNorm) {
        l.eps = parse_real(val, line_no, key);
      } else if (key == "momentum" && l.kind == LayerKind::kBatchNorm) {
        l.momentum = parse_real(val, line_no, key);
      } else if (key == "bits" && l.kind == LayerKind::kQuant) {
        l.bits = static_cast<int>(parse_size(val, line_no, key));
      } else if (key == "p" && l.kind == LayerKind::kDropout) {
        l.p = parse_real(val, line_no, key);
      } else {
        parse_fail(line_no, "unknown key '" + key + "' for " + head);
      }
    }
    if (l.has_weights() && !bias_set) l.bias = l.weight_bits != 1;
    validate(l, line_no);
    cfg.layers.push_back(l);
  }
  if (!have_input) throw UsageError("config: missing 'input' line");
  if (cfg.layers.empty()) throw UsageError("config: no layers");
  infer_shapes(cfg);
  return cfg;
}

NetworkConfig NetworkConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string NetworkConfig::to_text() const {
  std::string out = "name " + name + "\ninput ";
  for (std::size_t i = 0; i < input.size(); ++i) out += (i ? "x" : "") + std::to_string(input[i]);
  out += "\n";
  for (const auto& l : layers) {
    out += layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::kConv:
        out += " depth=" + std::to_string(l.depth) + " kernel=" + std::to_string(l.kernel) +
               " stride=" + std::to_string(l.stride) + " pad=" + std::to_string(l.pad);
        break;
      case LayerKind::kFc:
        out += " width=" + std::to_string(l.depth);
        break;
      case LayerKind::kBatchNorm:
        out += " eps=" + fmt_double(l.eps) + " momentum=" + fmt_double(l.momentum);
        break;
      case LayerKind::kQuant:
        out += " bits=" + std::to_string(l.bits);
        break;
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool:
        if (l.global) out += " global";
        else
          out += " kernel=" + std::to_string(l.kernel) + " stride=" + std::to_string(l.stride) +
                 " pad=" + std::to_string(l.pad);
        break;
      case LayerKind::kDropout:
        out += " p=" + fmt_double(l.p);
        break;
      default:
        break;
    }
    if (l.has_weights()) out += " wbits=" + std::to_string(l.weight_bits) + " bias=" + (l.bias ? "1" : "0");
    out += "\n";
  }
  return out;
}

std::uint64_t NetworkConfig::hash() const { return fnv1a64(to_text()); }

std::vector<Shape> infer_shapes(const NetworkConfig& config) {
  if (config.input.empty() || numel(config.input) == 0) throw UsageError("config: empty input shape");
  std::vector<Shape> shapes{config.input};
  for (std::size_t i = 0; i < config.layers.size(); ++i) {
    const auto& l = config.layers[i];
    const Shape& in = shapes.back();
    auto fail = [&](const std::string& what) -> void {
      throw UsageError("layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) + "): " + what +
                       ", input " + shape_string(in));
    };
    Shape out = in;
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool: {
        if (in.size() != 3) fail("needs a CxHxW input");
        if (l.global) {
          out = {in[0], 1, 1};
          break;
        }
        if (l.kernel > in[1] + 2 * l.pad || l.kernel > in[2] + 2 * l.pad) fail("kernel larger than padded input");
        const std::size_t oh = (in[1] + 2 * l.pad - l.kernel) / l.stride + 1;
        const std::size_t ow = (in[2] + 2 * l.pad - l.kernel) / l.stride + 1;
        out = {l.kind == LayerKind::kConv ? l.depth : in[0], oh, ow};
        break;
      }
      case LayerKind::kFc:
        out = {l.depth};
        break;
      default:
        break;
    }
    shapes.push_back(out);
  }
  const Shape& last = shapes.back();
  if (numel(last) != last[0]) {
    throw UsageError("config: network output " + shape_string(last) + " is not a flat class vector");
  }
  return shapes;
}

std::size_t output_classes(const NetworkConfig& config) { return infer_shapes(config).back()[0]; }

int input_activation_bits(const NetworkConfig& config, std::size_t index) {
  if (index == 0) return 32;
  const auto& prev = config.layers.at(index - 1);
  if (prev.kind == LayerKind::kSign) return 1;
  if (prev.kind == LayerKind::kQuant) return prev.bits;
  return 32;
}

Profile parse_profile(std::string_view name) {
  static const std::map<std::string_view, Profile> kNames = {
      {"SB", Profile::kSemi},
      {"AB", Profile::kAll},
      {"WQB", Profile::kWeightQuantized},
      {"AQB", Profile::kActivationQuantized},
      {"IB", Profile::kExceptInput},
      {"real", Profile::kReal},
  };
  auto it = kNames.find(name);
  if (it == kNames.end()) throw UsageError("unknown profile '" + std::string(name) + "' (SB|AB|WQB|AQB|IB|real)");
  return it->second;
}

Compression parse_compression(std::string_view name) {
  if (name == "none" || name.empty()) return Compression::kNone;
  if (name == "tiny" || name == "Tiny") return Compression::kTiny;
  if (name == "nano" || name == "Nano") return Compression::kNano;
  throw UsageError("unknown compression '" + std::string(name) + "' (none|tiny|nano)");
}

NetworkConfig apply_profile(const NetworkConfig& config, Profile profile, int q_bits) {
  if (q_bits < 2 || q_bits > 8) throw UsageError("apply_profile: Q must be in 2..8");
  NetworkConfig out = config;
  out.layers.clear();
  std::size_t weight_layers = 0;
  for (const auto& l : config.layers) weight_layers += l.has_weights();
  std::size_t w = 0;
  for (const auto& l : config.layers) {
    if (l.kind == LayerKind::kSign || l.kind == LayerKind::kQuant) continue;
    if (!l.has_weights()) {
      out.layers.push_back(l);
      continue;
    }
    const bool first = w == 0;
    const bool last = w + 1 == weight_layers;
    ++w;
    LayerConfig layer = l;
    int act = 32;
    switch (profile) {
      case Profile::kSemi:
        layer.weight_bits = (first || last) ? 32 : 1;
        act = (first || last) ? 32 : 1;
        break;
      case Profile::kAll:
        layer.weight_bits = 1;
        act = 1;
        break;
      case Profile::kWeightQuantized:
        layer.weight_bits = q_bits;
        act = 1;
        break;
      case Profile::kActivationQuantized:
        layer.weight_bits = 1;
        act = q_bits;
        break;
      case Profile::kExceptInput:
        layer.weight_bits = 1;
        act = first ? 32 : 1;
        break;
      case Profile::kReal:
        layer.weight_bits = 32;
        act = 32;
        break;
    }
    if (act != 32) {
      // sign(relu(x)) is constant; the quantizer takes over as the nonlinearity.
      for (std::size_t k = out.layers.size(); k-- > 0;) {
        const LayerKind kind = out.layers[k].kind;
        if (kind == LayerKind::kRelu) {
          out.layers.erase(out.layers.begin() + static_cast<std::ptrdiff_t>(k));
          break;
        }
        if (kind != LayerKind::kDropout && kind != LayerKind::kMaxPool && kind != LayerKind::kAvgPool) break;
      }
    }
    if (act == 1) {
      out.layers.push_back(LayerConfig{.kind = LayerKind::kSign});
    } else if (act != 32) {
      out.layers.push_back(LayerConfig{.kind = LayerKind::kQuant, .bits = act});
    }
    out.layers.push_back(layer);
  }
  infer_shapes(out);
  return out;
}

NetworkConfig compress(const NetworkConfig& config, Compression level) {
  if (level == Compression::kNone) return config;
  const double factor = level == Compression::kTiny ? 0.5 : 0.1;
  NetworkConfig out = config;
  std::size_t last_weight = out.layers.size();
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    if (out.layers[i].has_weights()) last_weight = i;
  }
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    auto& l = out.layers[i];
    if (!l.has_weights() || i == last_weight) continue;
    l.depth = std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(l.depth) * factor + 0.5));
  }
  out.name = config.name + (level == Compression::kTiny ? "-tiny" : "-nano");
  infer_shapes(out);
  return out;
}

}  // namespace benn
