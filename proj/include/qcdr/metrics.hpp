#pragma once

#include "qcdr/image.hpp"

namespace qcdr {

/// 10 log10(1 / MSE) over all RGB values; +infinity for identical images.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Mean SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, computed per channel then averaged.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

}  // namespace qcdr
