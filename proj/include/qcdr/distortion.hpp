#pragma once

#include <array>
#include <map>

#include "qcdr/image.hpp"

namespace qcdr {

/// Odd-power radial polynomial r_d = k1 r + k2 r^3 + k3 r^5 + k4 r^7 with a
/// degree label and the pixel radius that maps to normalised r = 1.
/// Construction rejects coefficient sets that are not strictly increasing on [0, 1].
class DistortionParams {
 public:
  static constexpr int kMonotonicitySamples = 1024;

  DistortionParams(std::array<double, 4> k, int degree_label, double norm_radius);

  static DistortionParams identity(int degree_label, double norm_radius);

  const std::array<double, 4>& k() const { return k_; }
  int degree_label() const { return degree_label_; }
  double norm_radius() const { return norm_radius_; }

  DistortionParams with_norm_radius(double norm_radius) const;

  friend bool operator==(const DistortionParams&, const DistortionParams&) = default;

 private:
  std::array<double, 4> k_;
  int degree_label_;
  double norm_radius_;
};

/// True when k gives a strictly increasing map on 1024 evenly spaced samples of [0, 1].
bool is_monotone(const std::array<double, 4>& k);

double radial_map(const std::array<double, 4>& k, double r_u);
inline double radial_map(const DistortionParams& params, double r_u) {
  return radial_map(params.k(), r_u);
}

/// Bisection on [0, 1]; throws DomainError when r_d is outside [0, radial_map(1)].
double invert_radial_map(const DistortionParams& params, double r_d);

/// Backward warp of a square image: each output pixel at distorted radius r_d
/// samples gt at radius invert_radial_map(r_d) along the same ray. Pixels
/// beyond the distorted unit circle, or whose sample falls outside gt, are black.
ImageBuffer synthesize_fisheye(const ImageBuffer& gt, const DistortionParams& params);

using DegreeLadder = std::map<int, DistortionParams>;

/// Scales k2..k4 of base by 0.2*i for i = 1..n_degrees and renormalises k1 so
/// that radial_map(1) = 1. Throws ValidationError naming the first non-monotone degree.
DegreeLadder build_degree_ladder(const DistortionParams& base, int n_degrees = 9);

/// Barrel-type base set used by the default ladder (radial_map(1) = 1).
DistortionParams default_base_params(double norm_radius);

}  // namespace qcdr
