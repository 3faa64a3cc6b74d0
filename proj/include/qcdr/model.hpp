#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "qcdr/blocks.hpp"
#include "qcdr/config.hpp"
#include "qcdr/dlqm.hpp"

namespace qcdr {

inline constexpr int kRectifierLayers = 11;
inline constexpr int kDecoderStages = 6;  // Z

enum class BlockKind { ccmb, camb };
using BlockAssignment = std::array<BlockKind, kRectifierLayers>;

/// Layers ordered from the largest feature maps to the smallest:
/// 1, 11, 2, 10, 3, 9, 4, 8, 5, 7, 6.
BlockAssignment hybrid_assignment(int ccmb_layers);
/// Parses "xC+yA" (x + y = 11) or an explicit 11-character string of C/A.
BlockAssignment parse_block_assignment(const std::string& text);
std::string to_string(const BlockAssignment& blocks);

Modulation parse_modulation(const std::string& text);
std::string to_string(Modulation mode);

struct ModelConfig {
  int64_t input_size = 256;
  std::vector<int64_t> encoder_channels{32, 64, 128, 192, 256};
  int64_t bottleneck_channels = 256;
  std::vector<int64_t> flow_channels{16, 32, 64, 128};
  double flow_gain = 0.0;  // <= 0 selects input_size / 16
  BlockAssignment blocks = hybrid_assignment(6);
  Modulation modulation = Modulation::dynamic;
  ControlMode control_mode = ControlMode::learnable_query;
  int64_t num_queries = 9;
  int64_t z = kDecoderStages;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  std::array<int64_t, 3> query_shape() const { return {3, input_size, input_size}; }
  /// Input feature shape of rectifier layers 1..11.
  std::vector<LayerSpec> layer_specs() const;
  double effective_flow_gain() const;

  static ModelConfig from_config(const KeyValueConfig& config);
  KeyValueConfig to_config() const;

  /// 64x64 toy configuration, channels [8,16,16,16,16].
  static ModelConfig micro64();
  /// 32x32 gradient-check configuration, channels [4,8,8,8,8].
  static ModelConfig micro32();
};

struct ForwardOutput {
  torch::Tensor image_out;                    // (B, 3, S, S); clamped outside training
  std::vector<torch::Tensor> decoder_features;  // F_out^j for j = 1..Z-1, at S / 2^j
  torch::Tensor flow;                         // (B, 2, S, S)
  torch::Tensor warped;                       // input after flow warping
};

/// 3x3 convolutions decoding F_out^j into RGB at scale j (index j-1).
class ScaleHeadsImpl : public torch::nn::Module {
 public:
  explicit ScaleHeadsImpl(const std::vector<int64_t>& channels);
  torch::Tensor forward(const torch::Tensor& feature, int j);
  std::size_t size() const { return heads_.size(); }
  torch::nn::Conv2d head(int j) { return heads_.at(static_cast<std::size_t>(j - 1)); }

 private:
  std::vector<torch::nn::Conv2d> heads_;
};
TORCH_MODULE(ScaleHeads);

class QueryCdrImpl : public torch::nn::Module {
 public:
  explicit QueryCdrImpl(ModelConfig config);

  /// control: a (C, H, W) or (B, C, H, W) query-shaped tensor, required
  /// unless control_mode is none (in which case it is ignored and every
  /// block receives an all-ones condition).
  ForwardOutput forward(const torch::Tensor& image,
                        const std::optional<torch::Tensor>& control = std::nullopt);

  /// DLQM: extract + control chain, one condition per rectifier layer.
  std::vector<torch::Tensor> control_conditions(const torch::Tensor& control);

  torch::Tensor decode_scale_head(const torch::Tensor& feature, int j) {
    return heads_->forward(feature, j);
  }

  const ModelConfig& config() const { return config_; }
  QuerySet queries() const { return queries_; }
  ScaleHeads heads() const { return heads_; }
  FlowEstimator flow_estimator() const { return flow_; }
  ControlExtractor extractor() const { return extractor_; }
  ControlChain chain() const { return chain_; }

 private:
  torch::Tensor apply_block(int layer, const torch::Tensor& x, const torch::Tensor& condition);

  ModelConfig config_;
  std::vector<LayerSpec> specs_;
  FlowEstimator flow_{nullptr};
  QuerySet queries_{nullptr};
  ControlExtractor extractor_{nullptr};
  ControlChain chain_{nullptr};
  torch::nn::Conv2d stem_{nullptr};
  std::vector<torch::nn::Conv2d> body_;        // per layer, before the block
  std::vector<Ccmb> ccmb_;                     // per layer, null when CAMB
  std::vector<Camb> camb_;                     // per layer, null when CCMB
  std::vector<torch::nn::Conv2d> transition_;  // layer l -> l+1 (l = 1..10)
  torch::nn::Conv2d out_head_{nullptr};
  ScaleHeads heads_{nullptr};
};
TORCH_MODULE(QueryCdr);

/// Exact learnable parameter count, computed from the configuration alone.
int64_t count_params(const ModelConfig& config);

}  // namespace qcdr
