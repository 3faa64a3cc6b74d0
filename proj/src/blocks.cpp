#include "qcdr/blocks.hpp"

#include <cmath>
#include <string>

#include "qcdr/errors.hpp"

namespace F = torch::nn::functional;

namespace qcdr {

namespace {

std::string shape_str(const torch::Tensor& t) {
  std::string s = "(";
  for (int64_t i = 0; i < t.dim(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.size(i));
  }
  return s + ")";
}

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

torch::Tensor gather_pixels(const torch::Tensor& flat, const torch::Tensor& index) {
  // flat (B, C, H*W), index (B, H*W)
  return flat.gather(2, index.unsqueeze(1).expand({flat.size(0), flat.size(1), index.size(1)}));
}

torch::Tensor to_tokens(const torch::Tensor& x) { return x.flatten(2).transpose(1, 2); }

}  // namespace

torch::Tensor match_batch(const torch::Tensor& control, int64_t batch) {
  torch::Tensor c = control.dim() == 3 ? control.unsqueeze(0) : control;
  if (c.size(0) == batch) return c;
  if (c.size(0) != 1) throw DimensionError("control batch does not match feature batch");
  return c.expand({batch, c.size(1), c.size(2), c.size(3)});
}

torch::Tensor warp(const torch::Tensor& x, const torch::Tensor& flow) {
  if (x.dim() != 4 || flow.dim() != 4 || flow.size(1) != 2 || x.size(0) != flow.size(0) ||
      x.size(2) != flow.size(2) || x.size(3) != flow.size(3)) {
    throw DimensionError("warp: feature " + shape_str(x) + " incompatible with flow " +
                         shape_str(flow));
  }
  const int64_t b = x.size(0);
  const int64_t h = x.size(2);
  const int64_t w = x.size(3);
  const auto opts = flow.options();
  const torch::Tensor xs = torch::arange(w, opts).view({1, 1, w});
  const torch::Tensor ys = torch::arange(h, opts).view({1, h, 1});
  const torch::Tensor sx = (xs + flow.select(1, 0)).clamp(0.0, static_cast<double>(w - 1));
  const torch::Tensor sy = (ys + flow.select(1, 1)).clamp(0.0, static_cast<double>(h - 1));

  const torch::Tensor x0f = sx.detach().floor();
  const torch::Tensor y0f = sy.detach().floor();
  const torch::Tensor fx = (sx - x0f).unsqueeze(1);
  const torch::Tensor fy = (sy - y0f).unsqueeze(1);
  const torch::Tensor x0 = x0f.to(torch::kLong);
  const torch::Tensor y0 = y0f.to(torch::kLong);
  const torch::Tensor x1 = (x0 + 1).clamp_max(w - 1);
  const torch::Tensor y1 = (y0 + 1).clamp_max(h - 1);

  const torch::Tensor flat = x.reshape({b, x.size(1), h * w});
  auto corner = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    return gather_pixels(flat, (yi * w + xi).reshape({b, h * w})).view({b, x.size(1), h, w});
  };
  const torch::Tensor top = corner(y0, x0) * (1 - fx) + corner(y0, x1) * fx;
  const torch::Tensor bottom = corner(y1, x0) * (1 - fx) + corner(y1, x1) * fx;
  return top * (1 - fy) + bottom * fy;
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width) {
  if (x.size(2) == height && x.size(3) == width) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride, bool bias) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(bias));
}

// ---------------------------------------------------------------------------

FlowEstimatorImpl::FlowEstimatorImpl(int64_t input_size, std::vector<int64_t> channels,
                                     double gain)
    : input_size_(input_size), gain_(gain) {
  if (channels.size() != 4) throw ConfigError("flow estimator needs exactly 4 channel widths");
  if (input_size % 8 != 0) throw ConfigError("flow estimator input size must be divisible by 8");
  encoder_ = register_module("encoder", torch::nn::ModuleList());
  decoder_ = register_module("decoder", torch::nn::ModuleList());
  encoder_->push_back(conv3x3(3, channels[0]));
  for (std::size_t i = 1; i < 4; ++i) encoder_->push_back(conv3x3(channels[i - 1], channels[i], 2));
  for (std::size_t i = 3; i > 0; --i) {
    decoder_->push_back(conv3x3(channels[i] + channels[i - 1], channels[i - 1]));
  }
  out_ = register_module("out", conv3x3(channels[0], 2));
  torch::NoGradGuard no_grad;
  out_->weight.zero_();
  out_->bias.zero_();
}

torch::Tensor FlowEstimatorImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != input_size_ ||
      image.size(3) != input_size_) {
    throw DimensionError("flow estimator expects (B, 3, " + std::to_string(input_size_) + ", " +
                         std::to_string(input_size_) + "), got " + shape_str(image));
  }
  std::vector<torch::Tensor> skips;
  torch::Tensor x = image;
  for (const auto& layer : *encoder_) {
    x = F::gelu(layer->as<torch::nn::Conv2d>()->forward(x));
    skips.push_back(x);
  }
  for (std::size_t i = 0; i < decoder_->size(); ++i) {
    const torch::Tensor& skip = skips[skips.size() - 2 - i];
    x = resize_bilinear(x, skip.size(2), skip.size(3));
    x = F::gelu(decoder_[i]->as<torch::nn::Conv2d>()->forward(torch::cat({x, skip}, 1)));
  }
  return out_->forward(x) * gain_;
}

// ---------------------------------------------------------------------------

CcmbImpl::CcmbImpl(int64_t channels, Modulation mode) : channels_(channels), mode_(mode) {
  if (mode_ == Modulation::dynamic) {
    fc1_ = register_module("fc1", torch::nn::Linear(2 * channels, channels));
    fc2_ = register_module("fc2", torch::nn::Linear(channels, 1));
  }
}

torch::Tensor CcmbImpl::fusion_ratio(const torch::Tensor& f_in, const torch::Tensor& q_c) {
  if (mode_ != Modulation::dynamic) throw StateError("fusion ratio requested from a static CCMB");
  const torch::Tensor control = match_batch(q_c, f_in.size(0));
  require_same_shape(f_in, control, "ccmb");
  const torch::Tensor pooled = torch::cat({f_in.mean({2, 3}), control.mean({2, 3})}, 1);
  return torch::sigmoid(fc2_->forward(F::gelu(fc1_->forward(pooled)))).squeeze(1);
}

torch::Tensor CcmbImpl::blend(const torch::Tensor& f_in, const torch::Tensor& q_c,
                              const torch::Tensor& theta) {
  const torch::Tensor control = match_batch(q_c, f_in.size(0));
  require_same_shape(f_in, control, "ccmb");
  const torch::Tensor f_c = f_in * control;
  const torch::Tensor t = theta.reshape({-1, 1, 1, 1});
  return t * f_c + (1 - t) * f_in;
}

torch::Tensor CcmbImpl::forward(const torch::Tensor& f_in, const torch::Tensor& q_c) {
  const torch::Tensor control = match_batch(q_c, f_in.size(0));
  require_same_shape(f_in, control, "ccmb");
  if (f_in.size(1) != channels_) throw DimensionError("ccmb: channel count mismatch");
  switch (mode_) {
    case Modulation::direct:
      return f_in * control;
    case Modulation::fixed:
      return 0.5 * (f_in * control) + 0.5 * f_in;
    case Modulation::dynamic:
      break;
  }
  return blend(f_in, control, fusion_ratio(f_in, control));
}

// ---------------------------------------------------------------------------

CambImpl::CambImpl(int64_t channels) : channels_(channels) {
  norm_in_ = register_module("norm_in", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
  norm_out_ = register_module("norm_out", torch::nn::LayerNorm(torch::nn::LayerNormOptions({channels})));
  const auto proj = [&](const char* name) {
    return register_module(name, torch::nn::Linear(torch::nn::LinearOptions(channels, channels).bias(false)));
  };
  w_q_ = proj("w_q");
  w_k_ = proj("w_k");
  w_v_ = proj("w_v");
  const int64_t hidden = 2 * channels;
  ffn_.push_back(register_module("ffn1", torch::nn::Linear(channels, hidden)));
  ffn_.push_back(register_module("ffn2", torch::nn::Linear(hidden, hidden)));
  ffn_.push_back(register_module("ffn3", torch::nn::Linear(hidden, channels)));
  proj_ = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 1)));
}

CambImpl::Streams CambImpl::project(const torch::Tensor& f_in, const torch::Tensor& q_c) {
  const torch::Tensor control = match_batch(q_c, f_in.size(0));
  require_same_shape(f_in, control, "camb");
  if (f_in.size(1) != channels_) throw DimensionError("camb: channel count mismatch");
  const torch::Tensor tokens = to_tokens(f_in);              // (B, L, C)
  const torch::Tensor controlled = to_tokens(f_in * control);
  const torch::Tensor normed_in = norm_in_->forward(tokens);
  return {w_q_->forward(norm_in_->forward(controlled)), w_k_->forward(normed_in),
          w_v_->forward(normed_in), tokens};
}

torch::Tensor CambImpl::attention_weights(const torch::Tensor& f_in, const torch::Tensor& q_c) {
  const Streams s = project(f_in, q_c);
  const double scale = 1.0 / std::sqrt(static_cast<double>(channels_));
  return torch::softmax(torch::matmul(s.q, s.k.transpose(1, 2)) * scale, -1);
}

torch::Tensor CambImpl::forward(const torch::Tensor& f_in, const torch::Tensor& q_c) {
  const Streams s = project(f_in, q_c);
  const double scale = 1.0 / std::sqrt(static_cast<double>(channels_));
  const torch::Tensor attn = torch::softmax(torch::matmul(s.q, s.k.transpose(1, 2)) * scale, -1);
  const torch::Tensor f_a = torch::matmul(attn, s.v) + s.tokens;
  torch::Tensor y = norm_out_->forward(f_a);
  y = F::gelu(ffn_[0]->forward(y));
  y = F::gelu(ffn_[1]->forward(y));
  y = ffn_[2]->forward(y) + f_a;
  const torch::Tensor spatial =
      y.transpose(1, 2).reshape({f_in.size(0), channels_, f_in.size(2), f_in.size(3)});
  return proj_->forward(spatial);
}

}  // namespace qcdr
