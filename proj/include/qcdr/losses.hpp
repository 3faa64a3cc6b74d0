#pragma once

#include <vector>

#include <torch/torch.h>

#include "qcdr/model.hpp"

namespace qcdr {

/// Mean absolute error over all elements.
torch::Tensor loss_reconstruction(const torch::Tensor& output, const torch::Tensor& gt);

/// S(gt, j): bilinear downsampling by 1/2^j.
torch::Tensor downsample_gt(const torch::Tensor& gt, int j);

/// sum_{j=1}^{n} mean|S(gt, j) - C_j(F_out^j)| with n = features.size() = heads->size().
torch::Tensor loss_multiscale(const torch::Tensor& gt, const std::vector<torch::Tensor>& features,
                              ScaleHeads& heads);

}  // namespace qcdr
