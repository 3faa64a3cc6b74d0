#include "qcdr/distortion.hpp"

#include <cmath>
#include <string>

#include "qcdr/errors.hpp"

namespace qcdr {

bool is_monotone(const std::array<double, 4>& k) {
  double previous = radial_map(k, 0.0);
  for (int i = 1; i < DistortionParams::kMonotonicitySamples; ++i) {
    const double r = static_cast<double>(i) / (DistortionParams::kMonotonicitySamples - 1);
    const double current = radial_map(k, r);
    if (!(current > previous)) return false;
    previous = current;
  }
  return true;
}

DistortionParams::DistortionParams(std::array<double, 4> k, int degree_label, double norm_radius)
    : k_(k), degree_label_(degree_label), norm_radius_(norm_radius) {
  if (degree_label < 1 || degree_label > 9) {
    throw ValidationError("degree label must be in 1..9, got " + std::to_string(degree_label));
  }
  if (!(norm_radius > 0.0) || !std::isfinite(norm_radius)) {
    throw ValidationError("norm_radius must be positive");
  }
  for (double c : k) {
    if (!std::isfinite(c)) throw ValidationError("distortion coefficients must be finite");
  }
  if (!is_monotone(k)) {
    throw ValidationError("radial map for degree " + std::to_string(degree_label) +
                          " is not strictly increasing on [0, 1]");
  }
}

DistortionParams DistortionParams::identity(int degree_label, double norm_radius) {
  return DistortionParams({1.0, 0.0, 0.0, 0.0}, degree_label, norm_radius);
}

DistortionParams DistortionParams::with_norm_radius(double norm_radius) const {
  return DistortionParams(k_, degree_label_, norm_radius);
}

double radial_map(const std::array<double, 4>& k, double r_u) {
  const double r2 = r_u * r_u;
  return r_u * (k[0] + r2 * (k[1] + r2 * (k[2] + r2 * k[3])));
}

double invert_radial_map(const DistortionParams& params, double r_d) {
  const double upper = radial_map(params, 1.0);
  if (!(r_d >= 0.0) || r_d > upper) {
    throw DomainError("r_d = " + std::to_string(r_d) + " outside [0, " +
                      std::to_string(upper) + "]");
  }
  double lo = 0.0;
  double hi = 1.0;
  // Bisect to the resolution of double; far tighter than the 1e-8 contract.
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (radial_map(params, mid) < r_d) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double err_lo = std::abs(radial_map(params, lo) - r_d);
  const double err_hi = std::abs(radial_map(params, hi) - r_d);
  return err_lo <= err_hi ? lo : hi;
}

ImageBuffer synthesize_fisheye(const ImageBuffer& gt, const DistortionParams& params) {
  if (gt.height() != gt.width()) {
    throw DimensionError("synthesize_fisheye expects a square image, got " +
                         std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  }
  const int size = gt.height();
  const double center = 0.5 * (size - 1);
  const double radius = params.norm_radius();
  const double max_rd = radial_map(params, 1.0);
  ImageBuffer out(size, size, 0.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = (x - center) / radius;
      const double dy = (y - center) / radius;
      const double r_d = std::sqrt(dx * dx + dy * dy);
      if (r_d > max_rd) continue;
      // Scale along the ray; at the centre the limit is 1/k1 but the offset is zero anyway.
      const double scale = r_d > 0.0 ? invert_radial_map(params, r_d) / r_d : 0.0;
      const double sx = center + dx * scale * radius;
      const double sy = center + dy * scale * radius;
      double value = 0.0;
      for (int c = 0; c < 3; ++c) {
        if (!sample_bilinear(gt, c, sx, sy, value)) break;
        out.set_clamped(c, y, x, value);
      }
    }
  }
  return out;
}

DegreeLadder build_degree_ladder(const DistortionParams& base, int n_degrees) {
  if (n_degrees < 1 || n_degrees > 9) throw ValidationError("n_degrees must be in 1..9");
  const auto& kb = base.k();
  DegreeLadder ladder;
  for (int i = 1; i <= n_degrees; ++i) {
    const double s = 0.2 * i;
    std::array<double, 4> k{0.0, s * kb[1], s * kb[2], s * kb[3]};
    k[0] = 1.0 - (k[1] + k[2] + k[3]);
    if (!is_monotone(k)) {
      throw ValidationError("degree ladder entry d" + std::to_string(i) +
                            " is not strictly increasing on [0, 1]");
    }
    ladder.emplace(i, DistortionParams(k, i, base.norm_radius()));
  }
  return ladder;
}

DistortionParams default_base_params(double norm_radius) {
  return DistortionParams({1.225, -0.2, -0.02, -0.005}, 5, norm_radius);
}

}  // namespace qcdr
