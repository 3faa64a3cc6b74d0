#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "qcdr/checkpoint.hpp"
#include "qcdr/config.hpp"
#include "qcdr/dataset.hpp"

namespace qcdr {

struct TrainConfig {
  int batch_size = 16;
  double learning_rate = 1e-4;
  int pretrain_steps = 1000;
  int finetune_steps = 1000;
  uint64_t seed = 0;
  double weight_reconstruction = 1.0;
  double weight_multiscale = 1.0;
  int pretrain_degree = 5;
  int log_every = 0;  // 0 disables progress lines on stderr

  void validate() const;
  static TrainConfig from_config(const KeyValueConfig& config);
};

struct StepRecord {
  int step = 0;
  double l_r = 0.0;
  double l_m = 0.0;
  double total = 0.0;
  int degree = 0;
};

struct TrainReport {
  std::string stage;
  std::vector<StepRecord> records;
  double wall_seconds = 0.0;
  std::filesystem::path checkpoint;

  /// Line-delimited records: step, L_r, L_m, total, degree (tab separated).
  void write(const std::filesystem::path& path) const;
};

struct Batch {
  torch::Tensor input;  // (B, 3, S, S) fisheye
  torch::Tensor gt;     // (B, 3, S, S)
  int degree = 0;
};

/// Draws single-degree batches from one split, cycling through a seeded
/// shuffle of each degree's records.
class PairLoader {
 public:
  PairLoader(const DatasetManifest& manifest, Split split, uint64_t seed);

  Batch next(int degree, int batch_size);
  std::vector<int> degrees() const;
  std::size_t size() const;

 private:
  struct Pool {
    std::vector<ManifestRecord> records;
    std::size_t cursor = 0;
  };
  const DatasetManifest& manifest_;
  std::map<int, Pool> pools_;
  std::mt19937_64 rng_;
};

torch::Tensor image_to_tensor(const ImageBuffer& image);
ImageBuffer tensor_to_image(const torch::Tensor& chw);

/// Loss pieces for one batch under the model's control mode.
struct LossTerms {
  torch::Tensor l_r, l_m, total;
};
LossTerms compute_losses(QueryCdr& model, const Batch& batch, const TrainConfig& cfg);

/// Control tensor the model should see for a degree (nullopt in mode none).
std::optional<torch::Tensor> control_for_degree(QueryCdr& model, int degree);

/// Coarse stage: single degree, single query. Sets stage = pretrained and,
/// when checkpoint_path is given, writes the bundle there.
TrainReport pretrain(ModelState& state, const DatasetManifest& dataset, const TrainConfig& cfg,
                     const std::optional<std::filesystem::path>& checkpoint_path = std::nullopt);

/// Fine stage: replicates the pre-trained query into every slot, then trains
/// round-robin over degrees with the matching query per batch.
TrainReport finetune(ModelState& state, const DatasetManifest& dataset, const TrainConfig& cfg,
                     const std::optional<std::filesystem::path>& checkpoint_path = std::nullopt,
                     std::optional<std::vector<int>> degrees = std::nullopt);

}  // namespace qcdr
