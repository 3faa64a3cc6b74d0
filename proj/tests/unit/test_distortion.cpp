#include "../doctest_torch.hpp"

#include <cmath>
#include <random>

#include "../oracles.hpp"
#include "qcdr/distortion.hpp"
#include "qcdr/errors.hpp"

using namespace qcdr;

namespace {

ImageBuffer checkerboard(int size, int cell) {
  ImageBuffer img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const bool on = ((x / cell) + (y / cell)) % 2 == 0;
      img.at(0, y, x) = on ? 0.9 : 0.1;
      img.at(1, y, x) = on ? 0.2 : 0.7;
      img.at(2, y, x) = (x + y) / (2.0 * size);
    }
  return img;
}

ImageBuffer random_image(int size, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(size, size);
  for (double& v : img.values()) v = u(rng);
  return img;
}

// Scalar per-pixel reference for backward fisheye synthesis: invert by dense
// search refined with bisection, then bilinear-sample along the same ray.
ImageBuffer synth_oracle(const ImageBuffer& gt, const double k[4], double norm_radius) {
  const int n = gt.height();
  const double c = (n - 1) / 2.0;
  ImageBuffer out(n, n);
  const double max_rd = oracle::radial(k, 1.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dx = (x - c) / norm_radius, dy = (y - c) / norm_radius;
      const double rd = std::hypot(dx, dy);
      if (rd > max_rd) continue;
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (oracle::radial(k, mid) < rd ? lo : hi) = mid;
      }
      const double ru = 0.5 * (lo + hi);
      const double s = rd > 0 ? ru / rd : 0.0;
      const double sx = c + dx * s * norm_radius, sy = c + dy * s * norm_radius;
      if (sx < -1e-9 || sy < -1e-9 || sx > n - 1 + 1e-9 || sy > n - 1 + 1e-9) continue;
      const double cx = std::clamp(sx, 0.0, n - 1.0), cy = std::clamp(sy, 0.0, n - 1.0);
      const int x0 = std::min(static_cast<int>(std::floor(cx)), n - 1), y0 = std::min(static_cast<int>(std::floor(cy)), n - 1);
      const int x1 = std::min(x0 + 1, n - 1), y1 = std::min(y0 + 1, n - 1);
      const double fx = cx - x0, fy = cy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = (gt.at(ch, y0, x0) * (1 - fx) + gt.at(ch, y0, x1) * fx) * (1 - fy) +
                         (gt.at(ch, y1, x0) * (1 - fx) + gt.at(ch, y1, x1) * fx) * fy;
        out.at(ch, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  return out;
}

double max_diff(const ImageBuffer& a, const ImageBuffer& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST_CASE("radial_map evaluates the odd polynomial") {
  CHECK(radial_map({1, 0, 0, 0}, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(radial_map({1, 0.1, 0, 0}, 1.0) == doctest::Approx(1.1).epsilon(1e-15));
  const double k[4] = {0.9, 0.2, -0.05, 0.01};
  CHECK(std::abs(radial_map({0.9, 0.2, -0.05, 0.01}, 0.7) - oracle::radial(k, 0.7)) < 1e-15);
  CHECK(radial_map({1.3, -0.2, 0.05, -0.01}, 0.0) == 0.0);
}

TEST_CASE("DistortionParams validates monotonicity and radius") {
  CHECK_NOTHROW(DistortionParams({1, 0, 0, 0}, 1, 10.0));
  CHECK_THROWS_AS(DistortionParams({1, -2, 0, 0}, 1, 10.0), ValidationError);
  CHECK_THROWS_AS(DistortionParams({1, 0, 0, 0}, 1, 0.0), ValidationError);
  CHECK_THROWS_AS(DistortionParams({1, 0, 0, 0}, 0, 10.0), ValidationError);
  CHECK_FALSE(is_monotone({0.5, 0.5, -1.2, 0.0}));
}

TEST_CASE("invert_radial_map") {
  const auto id = DistortionParams::identity(1, 1.0);
  CHECK(invert_radial_map(id, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(invert_radial_map(id, 1.5), DomainError);
  CHECK_THROWS_AS(invert_radial_map(id, -0.1), DomainError);

  SUBCASE("dense grid search oracle") {
    const DistortionParams p({0.9, 0.2, 0, 0}, 1, 1.0);
    const double k[4] = {0.9, 0.2, 0, 0};
    double best = 0.0, best_err = 1e9;
    for (int i = 0; i <= 1000000; ++i) {
      const double r = i * 1e-6;
      const double e = std::abs(oracle::radial(k, r) - 1.0);
      if (e < best_err) best_err = e, best = r;
    }
    const double got = invert_radial_map(p, 1.0);
    CHECK(std::abs(got - best) <= 1e-6);
    CHECK(std::abs(radial_map(p, got) - 1.0) < 1e-8);
  }

  SUBCASE("round trip on every ladder entry") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& [d, p] : build_degree_ladder(default_base_params(128.0))) {
      for (int i = 0; i < 100; ++i) {
        const double r = u(rng);
        CHECK(std::abs(invert_radial_map(p, radial_map(p, r)) - r) < 1e-6);
      }
    }
  }
}

TEST_CASE("degree ladder") {
  const auto base = default_base_params(128.0);
  const auto ladder = build_degree_ladder(base);
  REQUIRE(ladder.size() == 9);
  CHECK(ladder.at(5).k()[1] == doctest::Approx(base.k()[1]).epsilon(1e-15));
  CHECK(ladder.at(5).k()[0] == doctest::Approx(base.k()[0]).epsilon(1e-12));
  double previous = -1.0;
  for (const auto& [d, p] : ladder) {
    CHECK(p.degree_label() == d);
    CHECK(radial_map(p, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(is_monotone(p.k()));
    const double disp = std::abs(radial_map(p, 0.5) - 0.5);
    CHECK(disp > previous);
    previous = disp;
  }
  // Scaling k2 by 1.4 folds this base over, so d7 is the first bad entry.
  CHECK_THROWS_WITH_AS(build_degree_ladder(DistortionParams({1.4, -0.4, 0, 0}, 5, 1.0)),
                       doctest::Contains("d7"), ValidationError);
}

TEST_CASE("synthesize_fisheye") {
  SUBCASE("identity params reproduce the image inside the circle") {
    const ImageBuffer gt = random_image(32, 1);
    const ImageBuffer out = synthesize_fisheye(gt, DistortionParams::identity(1, 16.0));
    const double c = 15.5;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const double r = std::hypot(x - c, y - c) / 16.0;
        for (int ch = 0; ch < 3; ++ch) {
          if (r <= 1.0) CHECK(std::abs(out.at(ch, y, x) - gt.at(ch, y, x)) < 1e-6);
          else CHECK(out.at(ch, y, x) == 0.0);
        }
      }
  }
  SUBCASE("uniform colour stays uniform inside, black outside") {
    ImageBuffer gt(40, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        gt.at(0, y, x) = 0.25;
        gt.at(1, y, x) = 0.5;
        gt.at(2, y, x) = 0.75;
      }
    const auto ladder = build_degree_ladder(default_base_params(20.0));
    const ImageBuffer out = synthesize_fisheye(gt, ladder.at(9));
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        const double r = std::hypot(x - 19.5, y - 19.5) / 20.0;
        if (r < 0.999) CHECK(out.at(1, y, x) == doctest::Approx(0.5).epsilon(1e-12));
        if (r > 1.001) CHECK(out.at(1, y, x) == 0.0);
      }
  }
  SUBCASE("checkerboard at d9 matches the scalar oracle") {
    const ImageBuffer gt = checkerboard(48, 5);
    const auto p = build_degree_ladder(default_base_params(24.0)).at(9);
    const double k[4] = {p.k()[0], p.k()[1], p.k()[2], p.k()[3]};
    CHECK(max_diff(synthesize_fisheye(gt, p), synth_oracle(gt, k, 24.0)) < 1e-6);
  }
  SUBCASE("rotation equivariance") {
    const ImageBuffer gt = random_image(33, 2);
    for (int d : {1, 5, 9}) {
      const auto p = build_degree_ladder(default_base_params(16.5)).at(d);
      const ImageBuffer a = synthesize_fisheye(gt.rotated90(), p);
      const ImageBuffer b = synthesize_fisheye(gt, p).rotated90();
      CHECK(max_diff(a, b) < 1e-6);
    }
  }
  SUBCASE("output stays in range and keeps its size") {
    const ImageBuffer out = synthesize_fisheye(random_image(20, 4), default_base_params(10.0));
    CHECK(out.height() == 20);
    CHECK(out.width() == 20);
    CHECK(out.all_finite_in_unit_range());
  }
  CHECK_THROWS_AS(synthesize_fisheye(ImageBuffer(10, 12), default_base_params(5.0)), DimensionError);
}
