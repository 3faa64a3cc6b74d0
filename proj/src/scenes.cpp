#include "qcdr/scenes.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <random>

namespace qcdr {

namespace {

using Color = std::array<double, 3>;

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  return {u(rng), u(rng), u(rng)};
}

void put(ImageBuffer& img, int x, int y, const Color& color) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = color[c];
}

}  // namespace

ImageBuffer render_scene(int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ImageBuffer img(size, size);

  const Color a = random_color(rng);
  const Color b = random_color(rng);
  const double angle = unit(rng) * 2.0 * M_PI;
  const double gx = std::cos(angle);
  const double gy = std::sin(angle);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t = 0.5 + 0.5 * ((x / double(size) - 0.5) * gx + (y / double(size) - 0.5) * gy);
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1.0 - t) * a[c] + t * b[c];
    }
  }

  // Checker patch.
  {
    const int cell = std::max(2, size / 16);
    const int x0 = static_cast<int>(unit(rng) * size * 0.6);
    const int y0 = static_cast<int>(unit(rng) * size * 0.6);
    const int extent = static_cast<int>(size * (0.25 + 0.25 * unit(rng)));
    const Color dark = random_color(rng);
    const Color light = random_color(rng);
    for (int y = y0; y < std::min(size, y0 + extent); ++y)
      for (int x = x0; x < std::min(size, x0 + extent); ++x)
        put(img, x, y, (((x - x0) / cell + (y - y0) / cell) % 2) ? dark : light);
  }

  std::uniform_int_distribution<int> n_boxes(2, 5);
  for (int n = n_boxes(rng); n > 0; --n) {
    const Color color = random_color(rng);
    const int w = static_cast<int>(size * (0.08 + 0.3 * unit(rng)));
    const int h = static_cast<int>(size * (0.08 + 0.3 * unit(rng)));
    const int x0 = static_cast<int>(unit(rng) * (size - w));
    const int y0 = static_cast<int>(unit(rng) * (size - h));
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) put(img, x, y, color);
  }

  std::uniform_int_distribution<int> n_discs(1, 3);
  for (int n = n_discs(rng); n > 0; --n) {
    const Color color = random_color(rng);
    const double cx = unit(rng) * size;
    const double cy = unit(rng) * size;
    const double r = size * (0.05 + 0.12 * unit(rng));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) put(img, x, y, color);
  }

  // Long straight lines, the strongest cue for radial distortion.
  std::uniform_int_distribution<int> n_lines(3, 6);
  const int thickness = std::max(1, size / 64);
  for (int n = n_lines(rng); n > 0; --n) {
    const Color color = random_color(rng);
    const double theta = unit(rng) * M_PI;
    const double offset = (unit(rng) - 0.5) * size;
    const double nx = std::cos(theta);
    const double ny = std::sin(theta);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d = (x - size / 2.0) * nx + (y - size / 2.0) * ny - offset;
        if (std::abs(d) <= thickness * 0.5 + 0.25) put(img, x, y, color);
      }
    }
  }
  return img;
}

void write_scene_folder(const std::filesystem::path& dir, int count, int size,
                        std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%06d.png", i);
    write_png(dir / name, render_scene(size, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
  }
}

}  // namespace qcdr
