#pragma once

#include <array>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace qcdr {

/// Shape of one rectifier layer's input feature (C_l, H_l, W_l).
struct LayerSpec {
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class ControlMode { learnable_query, fixed_query, scalar, none };

std::string to_string(ControlMode mode);
ControlMode parse_control_mode(const std::string& text);

/// N learnable queries, each shaped like the network input. Slots are
/// addressed by degree label 1..N and stored as separate parameters so that a
/// step which never touches a slot leaves it (and its optimiser state) alone.
class QuerySetImpl : public torch::nn::Module {
 public:
  QuerySetImpl(int64_t count, std::array<int64_t, 3> shape, double init_range = 0.1);

  int64_t size() const { return static_cast<int64_t>(queries_.size()); }
  std::array<int64_t, 3> shape() const { return shape_; }

  const torch::Tensor& query(int degree_label) const;
  std::vector<torch::Tensor> all() const { return queries_; }

  /// Copies slot `source_label` into every other slot (fine-tuning start).
  void replicate(int source_label);

 private:
  std::array<int64_t, 3> shape_;
  std::vector<torch::Tensor> queries_;
};
TORCH_MODULE(QuerySet);

/// Convex weights over the query set.
struct QueryBlend {
  std::vector<double> weights;

  static QueryBlend one_hot(int count, int degree_label);
  /// Throws ValidationError unless weights are in [0, 1] and sum to 1 within tol.
  void validate(std::size_t expected_count, double tol = 1e-9) const;
};

/// sum_i w_i Q_i. With `unsafe` the convexity gate is skipped (raw linear
/// combinations, extrapolation included); the weight count is always checked.
torch::Tensor interpolate(const QuerySet& queries, const QueryBlend& blend, bool unsafe = false);

/// Three channel-preserving 3x3 convolutions with GELU in between.
class ControlExtractorImpl : public torch::nn::Module {
 public:
  explicit ControlExtractorImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& query);
  torch::nn::Conv2d conv(int i) { return convs_[static_cast<std::size_t>(i)]; }

 private:
  int64_t channels_;
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(ControlExtractor);

/// Per-layer control conditions: Q^l = resize(FC2(FC1(Q^{l-1}))) with
/// position-shared channel-wise linear maps (C_{l-1} -> 2 max(C_{l-1}, C_l) -> C_l).
class ControlChainImpl : public torch::nn::Module {
 public:
  ControlChainImpl(int64_t input_channels, std::vector<LayerSpec> specs);

  std::vector<torch::Tensor> forward(const torch::Tensor& extracted);

  const std::vector<LayerSpec>& specs() const { return specs_; }
  torch::nn::Conv2d fc1(std::size_t layer) { return fc1_[layer]; }
  torch::nn::Conv2d fc2(std::size_t layer) { return fc2_[layer]; }

  static int64_t hidden_width(int64_t in_channels, int64_t out_channels);

 private:
  std::vector<LayerSpec> specs_;
  std::vector<torch::nn::Conv2d> fc1_;
  std::vector<torch::nn::Conv2d> fc2_;
};
TORCH_MODULE(ControlChain);

/// The control tensor fed to DLQM for a given mode and degree:
///   learnable_query -> the query slot for the degree
///   fixed_query     -> radial ramp, 0 at the centre pixel, 1 at the farthest corner
///   scalar          -> constant degree/9
torch::Tensor make_control_source(ControlMode mode, int degree_label, const QuerySet& queries);
torch::Tensor fixed_query_ramp(std::array<int64_t, 3> shape, torch::TensorOptions options = {});

}  // namespace qcdr
