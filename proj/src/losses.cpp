#include "qcdr/losses.hpp"

#include "qcdr/blocks.hpp"
#include "qcdr/errors.hpp"

namespace qcdr {

torch::Tensor loss_reconstruction(const torch::Tensor& output, const torch::Tensor& gt) {
  if (output.sizes() != gt.sizes()) throw DimensionError("reconstruction loss: shape mismatch");
  return (output - gt).abs().mean();
}

torch::Tensor downsample_gt(const torch::Tensor& gt, int j) {
  if (j < 0) throw DimensionError("scale index must be non-negative");
  const int64_t factor = int64_t{1} << j;
  if (gt.size(2) % factor != 0 || gt.size(3) % factor != 0) {
    throw DimensionError("ground truth not divisible by 2^" + std::to_string(j));
  }
  if (factor == 1) return gt;
  namespace F = torch::nn::functional;
  return F::interpolate(gt, F::InterpolateFuncOptions()
                                .size(std::vector<int64_t>{gt.size(2) / factor, gt.size(3) / factor})
                                .mode(torch::kBilinear)
                                .align_corners(false)
                                .antialias(true));
}

torch::Tensor loss_multiscale(const torch::Tensor& gt, const std::vector<torch::Tensor>& features,
                              ScaleHeads& heads) {
  if (features.empty() || features.size() != heads->size()) {
    throw ConfigError("multi-scale loss needs one decoder feature per head (" +
                      std::to_string(heads->size()) + "), got " + std::to_string(features.size()));
  }
  torch::Tensor total = torch::zeros({}, gt.options());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int j = static_cast<int>(i + 1);
    const torch::Tensor target = downsample_gt(gt, j);
    const torch::Tensor decoded = heads->forward(features[i], j);
    if (decoded.sizes() != target.sizes()) {
      throw DimensionError("decoder feature " + std::to_string(j) + " is not at 1/2^" +
                           std::to_string(j) + " resolution");
    }
    total = total + (decoded - target).abs().mean();
  }
  return total;
}

}  // namespace qcdr
