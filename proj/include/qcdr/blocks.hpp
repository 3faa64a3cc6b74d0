#pragma once

#include <vector>

#include <torch/torch.h>

namespace qcdr {

/// Bilinear resampling of x (B, C, H, W) at p + flow(p), flow (B, 2, H, W) in
/// pixels (channel 0 = dx, channel 1 = dy). Samples outside the image clamp to
/// the border. Differentiable in both arguments; zero flow is an exact identity.
torch::Tensor warp(const torch::Tensor& x, const torch::Tensor& flow);

/// Bilinear resize with half-pixel centres (no antialiasing).
torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width);

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1, bool bias = true);

/// Small 4-level encoder-decoder predicting a full-resolution appearance flow.
/// The output layer starts at zero so an untrained estimator yields identity warping.
class FlowEstimatorImpl : public torch::nn::Module {
 public:
  FlowEstimatorImpl(int64_t input_size, std::vector<int64_t> channels, double gain);

  torch::Tensor forward(const torch::Tensor& image);

  torch::nn::Conv2d output_layer() { return out_; }

 private:
  int64_t input_size_;
  double gain_;
  torch::nn::ModuleList encoder_;
  torch::nn::ModuleList decoder_;
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(FlowEstimator);

/// How a CCMB merges F_in with the controlled feature F_c = F_in * Q_c.
enum class Modulation {
  direct,   // F_c
  fixed,    // 0.5 F_c + 0.5 F_in
  dynamic,  // theta F_c + (1 - theta) F_in, theta from the coefficient predictor
};

/// Controllable convolution modulating block.
class CcmbImpl : public torch::nn::Module {
 public:
  CcmbImpl(int64_t channels, Modulation mode = Modulation::dynamic);

  torch::Tensor forward(const torch::Tensor& f_in, const torch::Tensor& q_c);

  /// theta in (0, 1), one per sample, shape (B). Only valid in dynamic mode.
  torch::Tensor fusion_ratio(const torch::Tensor& f_in, const torch::Tensor& q_c);

  /// theta F_c + (1 - theta) F_in for a caller-supplied theta (B) tensor.
  static torch::Tensor blend(const torch::Tensor& f_in, const torch::Tensor& q_c,
                             const torch::Tensor& theta);

  Modulation mode() const { return mode_; }
  torch::nn::Linear fc1() { return fc1_; }
  torch::nn::Linear fc2() { return fc2_; }

 private:
  int64_t channels_;
  Modulation mode_;
  torch::nn::Linear fc1_{nullptr};
  torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(Ccmb);

/// Controllable attention modulating block: single-head attention whose query
/// stream is the controlled feature and whose key/value streams are the input.
class CambImpl : public torch::nn::Module {
 public:
  explicit CambImpl(int64_t channels);

  torch::Tensor forward(const torch::Tensor& f_in, const torch::Tensor& q_c);

  /// Row-stochastic attention matrix (B, L, L), L = H * W.
  torch::Tensor attention_weights(const torch::Tensor& f_in, const torch::Tensor& q_c);

  torch::nn::LayerNorm norm_in() { return norm_in_; }
  torch::nn::LayerNorm norm_out() { return norm_out_; }
  torch::nn::Linear w_q() { return w_q_; }
  torch::nn::Linear w_k() { return w_k_; }
  torch::nn::Linear w_v() { return w_v_; }
  torch::nn::Linear ffn(int i) { return ffn_[static_cast<std::size_t>(i)]; }
  torch::nn::Conv2d projection() { return proj_; }

 private:
  struct Streams {
    torch::Tensor q, k, v, tokens;
  };
  Streams project(const torch::Tensor& f_in, const torch::Tensor& q_c);

  int64_t channels_;
  torch::nn::LayerNorm norm_in_{nullptr};
  torch::nn::LayerNorm norm_out_{nullptr};
  torch::nn::Linear w_q_{nullptr};
  torch::nn::Linear w_k_{nullptr};
  torch::nn::Linear w_v_{nullptr};
  std::vector<torch::nn::Linear> ffn_;
  torch::nn::Conv2d proj_{nullptr};
};
TORCH_MODULE(Camb);

/// Broadcasts a (C, H, W) or (1, C, H, W) control tensor against a (B, C, H, W) feature.
torch::Tensor match_batch(const torch::Tensor& control, int64_t batch);

}  // namespace qcdr
