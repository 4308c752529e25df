#include "benn/nn/network.hpp"

#include "benn/common/error.hpp"
#include "benn/common/rng.hpp"

namespace benn {

Network::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  build();
  Rng rng = make_rng(seed, 0);
  for (auto& l : layers_) l->reset_parameters(rng);
}

Network::Network(const Network& other) : config_(other.config_), shapes_(other.shapes_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::build() {
  shapes_ = infer_shapes(config_);
  layers_.clear();
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    layers_.push_back(make_layer(config_, i, shapes_[i], shapes_[i + 1]));
  }
}

RealTensor Network::forward(const RealTensor& x, const ForwardContext& ctx) {
  const Shape& in = shapes_.front();
  if (x.rank() != in.size() + 1 || !std::equal(in.begin(), in.end(), x.shape().begin() + 1)) {
    throw UsageError("network input: expected [N x " + shape_string(in) + "], got " + shape_string(x.shape()));
  }
  return forward_from(0, x, ctx);
}

RealTensor Network::forward_from(std::size_t first, const RealTensor& x, const ForwardContext& ctx) {
  RealTensor h = x;
  for (std::size_t i = first; i < layers_.size(); ++i) {
    h = layers_[i]->forward(h, ctx);
    if (auto bad = h.first_non_finite(); bad != h.size()) {
      throw NumericalError("layer " + std::to_string(i) + " (" +
                           std::string(layer_kind_name(config_.layers[i].kind)) + "): non-finite output at element " +
                           std::to_string(bad));
    }
  }
  const std::size_t n = h.dim(0);
  return h.reshaped({n, num_classes()});
}

RealTensor Network::predict_proba(const RealTensor& x, std::size_t batch_size) {
  const std::size_t n = x.dim(0);
  const std::size_t c = num_classes();
  RealTensor out({n, c});
  ForwardContext ctx;
  for (std::size_t b = 0; b < n; b += batch_size) {
    const std::size_t e = std::min(n, b + batch_size);
    const RealTensor p = softmax_rows(forward(x.slice_rows(b, e), ctx));
    std::copy(p.values().begin(), p.values().end(), out.data() + b * c);
  }
  return out;
}

std::vector<int> Network::predict(const RealTensor& x, std::size_t batch_size) {
  return argmax_rows(predict_proba(x, batch_size));
}

RealTensor Network::backward(const RealTensor& grad_logits) {
  const std::size_t n = grad_logits.dim(0);
  Shape out_shape{n};
  out_shape.insert(out_shape.end(), shapes_.back().begin(), shapes_.back().end());
  RealTensor g = grad_logits.reshaped(out_shape);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g);
    if (auto bad = g.first_non_finite(); bad != g.size()) {
      throw NumericalError("layer " + std::to_string(i) + ": non-finite gradient");
    }
  }
  return g;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<NamedTensor> Network::state() {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = std::to_string(i) + ".";
    for (auto* p : layers_[i]->parameters()) out.push_back({prefix + p->name, &p->value});
    for (auto& [name, t] : layers_[i]->buffers()) out.push_back({prefix + name, t});
  }
  return out;
}

void Network::zero_grad() {
  for (auto* p : parameters()) {
    if (p->value.has_grad()) {
      p->value.zero_grad();
    } else {
      p->value.enable_grad();
    }
  }
}

void Network::calibrate_batchnorm(const RealTensor& x) {
  for (auto& l : layers_) set_batchnorm_calibration(*l, true);
  ForwardContext ctx;
  ctx.mode = Mode::kTrain;
  Rng rng = make_rng(0, 0);
  ctx.rng = &rng;
  try {
    forward(x, ctx);
  } catch (...) {
    for (auto& l : layers_) set_batchnorm_calibration(*l, false);
    throw;
  }
  for (auto& l : layers_) set_batchnorm_calibration(*l, false);
}

}  // namespace benn
