#include <algorithm>
#include <cmath>
#include <limits>

#include "benn/bitcore/kernels.hpp"
#include "benn/common/error.hpp"
#include "benn/nn/layers.hpp"
#include "benn/nn/ops.hpp"

namespace benn {
namespace {

std::size_t batch_of(const RealTensor& x, const Shape& per_example, std::size_t index, std::string_view kind) {
  if (x.rank() != per_example.size() + 1 || !std::equal(per_example.begin(), per_example.end(), x.shape().begin() + 1)) {
    throw UsageError("layer " + std::to_string(index) + " (" + std::string(kind) + "): expected input [N x " +
                     shape_string(per_example) + "], got " + shape_string(x.shape()));
  }
  return x.dim(0);
}

Shape with_batch(std::size_t n, const Shape& s) {
  Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

class Dense final : public WeightLayer {
 public:
  Dense(const LayerConfig& cfg, std::size_t index, const Shape& in, bool binary_input)
      : WeightLayer(cfg, {cfg.depth, numel(in)}, std::nullopt, binary_input), index_(index), in_shape_(in) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  RealTensor forward(const RealTensor& x, const ForwardContext& ctx) override {
    const std::size_t n = batch_of(x, in_shape_, index_, "fc");
    RealTensor out({n, filters_});
    const float* bias = has_bias_ ? bias_.value.data() : nullptr;
    if (use_packed_path(ctx)) {
      if (!binary_.is_fresh()) binary_.refresh();
      const BitRows xr = BitRows::from_signs(x.values(), n, fan_in_);
      std::vector<std::int32_t> ints(n * filters_);
      binary_gemm(binary_.rows(), xr, ints);
      const auto& scale = binary_.scale();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t o = 0; o < filters_; ++o) {
          out[b * filters_ + o] =
              scale[o] * static_cast<float>(ints[b * filters_ + o]) + (bias ? bias[o] : 0.0f);
        }
      }
    } else {
      const auto w = forward_weights();
      const auto scale = filter_scale();
      const auto dot = kernels::active().dot_f32;
      for (std::size_t b = 0; b < n; ++b) {
        const float* xb = x.data() + b * fan_in_;
        for (std::size_t o = 0; o < filters_; ++o) {
          float v = dot(w.data() + o * fan_in_, xb, fan_in_);
          if (!scale.empty()) v *= scale[o];
          out[b * filters_ + o] = v + (bias ? bias[o] : 0.0f);
        }
      }
    }
    if (ctx.keep_cache) input_ = x;
    return out;
  }

  RealTensor backward(const RealTensor& grad) override {
    const std::size_t n = grad.dim(0);
    if (input_.size() != n * fan_in_) throw UsageError("fc backward without a cached forward");
    const auto w = effective_weights();
    const auto axpy = kernels::active().axpy_f32;
    RealTensor dx(input_.shape());
    std::vector<float> dw(filters_ * fan_in_, 0.0f);
    for (std::size_t b = 0; b < n; ++b) {
      const float* xb = input_.data() + b * fan_in_;
      float* dxb = dx.data() + b * fan_in_;
      for (std::size_t o = 0; o < filters_; ++o) {
        const float g = grad[b * filters_ + o];
        if (g == 0.0f) continue;
        axpy(g, w.data() + o * fan_in_, dxb, fan_in_);
        axpy(g, xb, dw.data() + o * fan_in_, fan_in_);
      }
    }
    accumulate_weight_grad(dw);
    if (has_bias_) {
      auto db = bias_.value.grad();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < filters_; ++o) db[o] += grad[b * filters_ + o];
    }
    return dx;
  }

 private:
  std::size_t index_;
  Shape in_shape_;
  RealTensor input_;
};

class Conv final : public WeightLayer {
 public:
  Conv(const LayerConfig& cfg, std::size_t index, const Shape& in, bool binary_input)
      : WeightLayer(cfg, {cfg.depth, in[0], cfg.kernel, cfg.kernel},
                    conv_geometry(in[0], in[1], in[2], cfg.kernel, cfg.stride, cfg.pad), binary_input),
        index_(index),
        in_shape_(in),
        geom_(conv_geometry(in[0], in[1], in[2], cfg.kernel, cfg.stride, cfg.pad)),
        // Binary activations pad with -1, real ones with 0.
        pad_value_(binary_input ? -1.0f : 0.0f) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv>(*this); }

  RealTensor forward(const RealTensor& x, const ForwardContext& ctx) override {
    const std::size_t n = batch_of(x, in_shape_, index_, "conv");
    const std::size_t positions = geom_.out_h * geom_.out_w;
    const std::size_t plane = numel(in_shape_);
    RealTensor out({n, filters_, geom_.out_h, geom_.out_w});
    const float* bias = has_bias_ ? bias_.value.data() : nullptr;
    if (use_packed_path(ctx)) {
      if (!binary_.is_fresh()) binary_.refresh();
      const PackedBitTensor packed = pack(x.values(), x.shape());
      std::vector<std::int32_t> ints(filters_ * positions);
      const auto& scale = binary_.scale();
      for (std::size_t b = 0; b < n; ++b) {
        binary_conv(packed, b * plane, geom_, binary_.rows(), ints);
        float* ob = out.data() + b * filters_ * positions;
        for (std::size_t f = 0; f < filters_; ++f) {
          for (std::size_t p = 0; p < positions; ++p) {
            ob[f * positions + p] = scale[f] * static_cast<float>(ints[f * positions + p]) + (bias ? bias[f] : 0.0f);
          }
        }
      }
    } else {
      const auto w = forward_weights();
      const auto scale = filter_scale();
      const auto dot = kernels::active().dot_f32;
      std::vector<float> cols;
      for (std::size_t b = 0; b < n; ++b) {
        im2col(x.data() + b * plane, cols);
        float* ob = out.data() + b * filters_ * positions;
        for (std::size_t f = 0; f < filters_; ++f) {
          const float a = scale.empty() ? 1.0f : scale[f];
          for (std::size_t p = 0; p < positions; ++p) {
            float v = dot(w.data() + f * fan_in_, cols.data() + p * fan_in_, fan_in_);
            if (!scale.empty()) v *= a;
            ob[f * positions + p] = v + (bias ? bias[f] : 0.0f);
          }
        }
      }
    }
    if (ctx.keep_cache) input_ = x;
    return out;
  }

  RealTensor backward(const RealTensor& grad) override {
    const std::size_t n = grad.dim(0);
    const std::size_t positions = geom_.out_h * geom_.out_w;
    const std::size_t plane = numel(in_shape_);
    if (input_.size() != n * plane) throw UsageError("conv backward without a cached forward");
    const auto w = effective_weights();
    const auto axpy = kernels::active().axpy_f32;
    RealTensor dx(input_.shape());
    std::vector<float> dw(filters_ * fan_in_, 0.0f);
    std::vector<float> cols, dcols;
    for (std::size_t b = 0; b < n; ++b) {
      im2col(input_.data() + b * plane, cols);
      dcols.assign(positions * fan_in_, 0.0f);
      const float* gb = grad.data() + b * filters_ * positions;
      for (std::size_t f = 0; f < filters_; ++f) {
        for (std::size_t p = 0; p < positions; ++p) {
          const float g = gb[f * positions + p];
          if (g == 0.0f) continue;
          axpy(g, cols.data() + p * fan_in_, dw.data() + f * fan_in_, fan_in_);
          axpy(g, w.data() + f * fan_in_, dcols.data() + p * fan_in_, fan_in_);
        }
      }
      col2im(dcols, dx.data() + b * plane);
    }
    accumulate_weight_grad(dw);
    if (has_bias_) {
      auto db = bias_.value.grad();
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t f = 0; f < filters_; ++f)
          for (std::size_t p = 0; p < positions; ++p) db[f] += grad[(b * filters_ + f) * positions + p];
    }
    return dx;
  }

 private:
  template <typename Fn>
  void for_each_tap(Fn&& fn) const {
    const auto pad = static_cast<std::ptrdiff_t>(geom_.pad);
    const auto h = static_cast<std::ptrdiff_t>(geom_.height);
    const auto wd = static_cast<std::ptrdiff_t>(geom_.width);
    std::size_t p = 0;
    for (std::size_t oy = 0; oy < geom_.out_h; ++oy) {
      for (std::size_t ox = 0; ox < geom_.out_w; ++ox, ++p) {
        std::size_t col = 0;
        for (std::size_t c = 0; c < geom_.channels; ++c) {
          for (std::size_t ky = 0; ky < geom_.kernel; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * geom_.stride + ky) - pad;
            for (std::size_t kx = 0; kx < geom_.kernel; ++kx, ++col) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * geom_.stride + kx) - pad;
              const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < wd;
              fn(p * fan_in_ + col,
                 inside ? static_cast<std::ptrdiff_t>(c * geom_.height * geom_.width) + iy * wd + ix : -1);
            }
          }
        }
      }
    }
  }

  void im2col(const float* src, std::vector<float>& cols) const {
    cols.resize(geom_.out_h * geom_.out_w * fan_in_);
    for_each_tap([&](std::size_t dst, std::ptrdiff_t s) { cols[dst] = s < 0 ? pad_value_ : src[s]; });
  }

  void col2im(const std::vector<float>& dcols, float* dst) const {
    for_each_tap([&](std::size_t c, std::ptrdiff_t s) {
      if (s >= 0) dst[s] += dcols[c];
    });
  }

  std::size_t index_;
  Shape in_shape_;
  ConvGeometry geom_;
  float pad_value_;
  RealTensor input_;
};

class BatchNorm final : public Layer {
 public:
  BatchNorm(const LayerConfig& cfg, std::size_t index, const Shape& in)
      : index_(index), in_shape_(in), channels_(in[0]), spatial_(numel(in) / in[0]), eps_(cfg.eps),
        momentum_(cfg.momentum) {
    gamma_ = {"gamma", RealTensor({channels_}, 1.0f)};
    beta_ = {"beta", RealTensor({channels_}, 0.0f)};
    gamma_.value.enable_grad();
    beta_.value.enable_grad();
    running_mean_ = RealTensor({channels_}, 0.0f);
    running_var_ = RealTensor({channels_}, 1.0f);
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

  RealTensor forward(const RealTensor& x, const ForwardContext& ctx) override {
    const std::size_t n = batch_of(x, in_shape_, index_, "batchnorm");
    RealTensor out(x.shape());
    train_ = ctx.mode == Mode::kTrain;
    mean_.assign(channels_, 0.0);
    inv_std_.assign(channels_, 0.0);
    const double count = static_cast<double>(n * spatial_);
    for (std::size_t c = 0; c < channels_; ++c) {
      double mean = running_mean_[c], var = running_var_[c];
      if (train_) {
        double s = 0.0, ss = 0.0;
        for_channel(c, n, [&](std::size_t i) { s += x[i]; });
        mean = s / count;
        for_channel(c, n, [&](std::size_t i) { ss += (x[i] - mean) * (x[i] - mean); });
        var = ss / count;
        if (calibrate_) {
          running_mean_[c] = static_cast<float>(mean);
          running_var_[c] = static_cast<float>(var);
        } else {
          const double unbiased = count > 1 ? ss / (count - 1) : var;
          running_mean_[c] = static_cast<float>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
          running_var_[c] = static_cast<float>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
        }
      }
      const double inv = 1.0 / std::sqrt(var + eps_);
      mean_[c] = mean;
      inv_std_[c] = inv;
      const double g = gamma_.value[c], b = beta_.value[c];
      for_channel(c, n, [&](std::size_t i) { out[i] = static_cast<float>((x[i] - mean) * inv * g + b); });
    }
    if (ctx.keep_cache) input_ = x;
    return out;
  }

  RealTensor backward(const RealTensor& grad) override {
    const std::size_t n = grad.dim(0);
    RealTensor dx(grad.shape());
    auto dgamma = gamma_.value.grad();
    auto dbeta = beta_.value.grad();
    const double count = static_cast<double>(n * spatial_);
    for (std::size_t c = 0; c < channels_; ++c) {
      const double mean = mean_[c], inv = inv_std_[c], g = gamma_.value[c];
      double sum_g = 0.0, sum_gx = 0.0;
      for_channel(c, n, [&](std::size_t i) {
        const double xhat = (input_[i] - mean) * inv;
        sum_g += grad[i];
        sum_gx += grad[i] * xhat;
      });
      dgamma[c] += static_cast<float>(sum_gx);
      dbeta[c] += static_cast<float>(sum_g);
      for_channel(c, n, [&](std::size_t i) {
        if (train_) {
          const double xhat = (input_[i] - mean) * inv;
          dx[i] = static_cast<float>(g * inv * (grad[i] - sum_g / count - xhat * sum_gx / count));
        } else {
          dx[i] = static_cast<float>(g * inv * grad[i]);
        }
      });
    }
    return dx;
  }

  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, RealTensor*>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

  void set_calibrate(bool on) { calibrate_ = on; }

 private:
  template <typename Fn>
  void for_channel(std::size_t c, std::size_t n, Fn&& fn) const {
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * channels_ + c) * spatial_;
      for (std::size_t s = 0; s < spatial_; ++s) fn(base + s);
    }
  }

  std::size_t index_;
  Shape in_shape_;
  std::size_t channels_, spatial_;
  double eps_, momentum_;
  Parameter gamma_, beta_;
  RealTensor running_mean_, running_var_;
  RealTensor input_;
  std::vector<double> mean_, inv_std_;
  bool train_ = false;
  bool calibrate_ = false;
};

enum class Activation { kRelu, kHardTanh, kSign, kQuant };

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(Activation kind, int bits, std::size_t index, const Shape& in)
      : kind_(kind), bits_(bits), index_(index), in_shape_(in) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<ActivationLayer>(*this); }

  RealTensor forward(const RealTensor& x, const ForwardContext& ctx) override {
    batch_of(x, in_shape_, index_, "activation");
    RealTensor out(x.shape());
    const bool clip = kind_ == Activation::kHardTanh || (ctx.surrogate && kind_ != Activation::kRelu);
    if (clip) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], -1.0f, 1.0f);
    } else if (kind_ == Activation::kRelu) {
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i], 0.0f);
    } else if (kind_ == Activation::kSign) {
      out = binarize_forward(x);
    } else {
      if (auto bad = x.first_non_finite(); bad != x.size()) {
        throw NumericalError("layer " + std::to_string(index_) + ": non-finite activation");
      }
      out = quantize_k_bit(x, bits_);
    }
    if (ctx.keep_cache) input_ = x;
    return out;
  }

  RealTensor backward(const RealTensor& grad) override {
    if (kind_ == Activation::kRelu) {
      RealTensor dx(grad.shape());
      for (std::size_t i = 0; i < grad.size(); ++i) dx[i] = input_[i] > 0.0f ? grad[i] : 0.0f;
      return dx;
    }
    return ste_backward(grad, input_);
  }

 private:
  Activation kind_;
  int bits_;
  std::size_t index_;
  Shape in_shape_;
  RealTensor input_;
};

class Pool final : public Layer {
 public:
  Pool(const LayerConfig& cfg, std::size_t index, const Shape& in, const Shape& out)
      : max_(cfg.kind == LayerKind::kMaxPool), index_(index), in_shape_(in), out_shape_(out),
        kernel_h_(cfg.global ? in[1] : cfg.kernel), kernel_w_(cfg.global ? in[2] : cfg.kernel),
        stride_(cfg.global ? 1 : cfg.stride), pad_(cfg.global ? 0 : cfg.pad) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Pool>(*this); }

  RealTensor forward(const RealTensor& x, const ForwardContext& ctx) override {
    const std::size_t n = batch_of(x, in_shape_, index_, max_ ? "maxpool" : "avgpool");
    const std::size_t c = in_shape_[0], h = in_shape_[1], w = in_shape_[2];
    const std::size_t oh = out_shape_[1], ow = out_shape_[2];
    RealTensor out(with_batch(n, out_shape_));
    if (max_) argmax_.assign(out.size(), -1);
    // Average pooling divides by the full window (padding counts as zero).
    const float inv_area = 1.0f / static_cast<float>(kernel_h_ * kernel_w_);
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const float* src = x.data() + plane * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
          float best = -std::numeric_limits<float>::infinity();
          std::ptrdiff_t best_i = -1;
          float sum = 0.0f;
          window(oy, ox, [&](std::size_t i) {
            if (src[i] > best) {
              best = src[i];
              best_i = static_cast<std::ptrdiff_t>(plane * h * w + i);
            }
            sum += src[i];
          });
          if (max_) {
            out[o] = best_i < 0 ? 0.0f : best;
            argmax_[o] = best_i;
          } else {
            out[o] = sum * inv_area;
          }
        }
      }
    }
    if (ctx.keep_cache) batch_ = n;
    return out;
  }

  RealTensor backward(const RealTensor& grad) override {
    const std::size_t n = grad.dim(0);
    const std::size_t c = in_shape_[0], h = in_shape_[1], w = in_shape_[2];
    RealTensor dx(with_batch(n, in_shape_));
    if (max_) {
      for (std::size_t o = 0; o < grad.size(); ++o) {
        if (argmax_[o] >= 0) dx[static_cast<std::size_t>(argmax_[o])] += grad[o];
      }
      return dx;
    }
    const float inv_area = 1.0f / static_cast<float>(kernel_h_ * kernel_w_);
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      float* d = dx.data() + plane * h * w;
      for (std::size_t oy = 0; oy < out_shape_[1]; ++oy) {
        for (std::size_t ox = 0; ox < out_shape_[2]; ++ox, ++o) {
          const float g = grad[o] * inv_area;
          window(oy, ox, [&](std::size_t i) { d[i] += g; });
        }
      }
    }
    return dx;
  }

 private:
  template <typename Fn>
  void window(std::size_t oy, std::size_t ox, Fn&& fn) const {
    const auto h = static_cast<std::ptrdiff_t>(in_shape_[1]);
    const auto w = static_cast<std::ptrdiff_t>(in_shape_[2]);
    const auto y0 = static_cast<std::ptrdiff_t>(oy * stride_) - static_cast<std::ptrdiff_t>(pad_);
    const auto x0 = static_cast<std::ptrdiff_t>(ox * stride_) - static_cast<std::ptrdiff_t>(pad_);
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(y0, 0); y < std::min<std::ptrdiff_t>(y0 + static_cast<std::ptrdiff_t>(kernel_h_), h); ++y) {
      for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(x0, 0); x < std::min<std::ptrdiff_t>(x0 + static_cast<std::ptrdiff_t>(kernel_w_), w); ++x) {
        fn(static_cast<std::size_t>(y * w + x));
      }
    }
  }

  bool max_;
  std::size_t index_;
  Shape in_shape_, out_shape_;
  std::size_t kernel_h_, kernel_w_, stride_, pad_;
  std::vector<std::ptrdiff_t> argmax_;
  std::size_t batch_ = 0;
};

class Dropout final : public Layer {
 public:
  Dropout(double p, std::size_t index, const Shape& in) : p_(p), index_(index), in_shape_(in) {}

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

  RealTensor forward(const RealTensor& x, const ForwardContext& ctx) override {
    batch_of(x, in_shape_, index_, "dropout");
    if (ctx.mode != Mode::kTrain || p_ == 0.0) {
      mask_.assign(x.size(), 1.0f);
      return x;
    }
    if (!ctx.rng) throw UsageError("dropout in training mode needs an rng");
    const float keep_scale = static_cast<float>(1.0 / (1.0 - p_));
    mask_.resize(x.size());
    RealTensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = uniform01(*ctx.rng) < p_ ? 0.0f : keep_scale;
      out[i] = x[i] * mask_[i];
    }
    return out;
  }

  RealTensor backward(const RealTensor& grad) override {
    RealTensor dx(grad.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) dx[i] = grad[i] * mask_[i];
    return dx;
  }

 private:
  double p_;
  std::size_t index_;
  Shape in_shape_;
  std::vector<float> mask_;
};

}  // namespace

void set_batchnorm_calibration(Layer& layer, bool on) {
  if (auto* bn = dynamic_cast<BatchNorm*>(&layer)) bn->set_calibrate(on);
}

std::unique_ptr<Layer> make_layer(const NetworkConfig& config, std::size_t index, const Shape& in,
                                  const Shape& out) {
  const auto& l = config.layers.at(index);
  const bool binary_input = input_activation_bits(config, index) == 1;
  switch (l.kind) {
    case LayerKind::kFc:
      return std::make_unique<Dense>(l, index, in, binary_input);
    case LayerKind::kConv:
      return std::make_unique<Conv>(l, index, in, binary_input);
    case LayerKind::kBatchNorm:
      return std::make_unique<BatchNorm>(l, index, in);
    case LayerKind::kRelu:
      return std::make_unique<ActivationLayer>(Activation::kRelu, 0, index, in);
    case LayerKind::kHardTanh:
      return std::make_unique<ActivationLayer>(Activation::kHardTanh, 0, index, in);
    case LayerKind::kSign:
      return std::make_unique<ActivationLayer>(Activation::kSign, 1, index, in);
    case LayerKind::kQuant:
      return std::make_unique<ActivationLayer>(Activation::kQuant, l.bits, index, in);
    case LayerKind::kMaxPool:
    case LayerKind::kAvgPool:
      return std::make_unique<Pool>(l, index, in, out);
    case LayerKind::kDropout:
      return std::make_unique<Dropout>(l.p, index, in);
  }
  throw UsageError("unknown layer kind");
}

}  // namespace benn
