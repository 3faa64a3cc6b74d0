#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qcdr/checkpoint.hpp"
#include "qcdr/dlqm.hpp"
#include "qcdr/image.hpp"

namespace qcdr {

/// Either a single degree label or convex weights over the query set.
using RectifyControl = std::variant<int, QueryBlend>;

struct RectifyResult {
  ImageBuffer image;          // same size as the input
  std::vector<double> blend;  // effective weights, one per query slot
};

/// Inference over a private copy of a model's parameters. The copy is taken at
/// construction and never modified, so concurrent rectify() calls are safe and
/// later training of the source model has no effect.
class Rectifier {
 public:
  explicit Rectifier(const ModelState& state);

  RectifyResult rectify(const ImageBuffer& image, const RectifyControl& control,
                        bool unsafe = false) const;

  /// Batched network pass on (B, 3, S, S) inputs already at the model size.
  torch::Tensor rectify_tensor(const torch::Tensor& input, const QueryBlend& blend,
                               bool unsafe = false) const;

  /// Control tensor for a blend: interpolated queries in learnable mode,
  /// the same convex combination of per-degree sources otherwise.
  torch::Tensor control_for(const QueryBlend& blend, bool unsafe = false) const;

  QueryBlend resolve(const RectifyControl& control, bool unsafe = false) const;

  const ModelConfig& config() const { return model_->config(); }
  const std::string& checkpoint_id() const { return checkpoint_id_; }
  Stage stage() const { return stage_; }
  int64_t query_count() const { return model_->config().num_queries; }
  std::vector<torch::Tensor> queries() const { return model_->queries()->all(); }

 private:
  QueryCdr model_{nullptr};
  std::string checkpoint_id_;
  Stage stage_;
};

}  // namespace qcdr
