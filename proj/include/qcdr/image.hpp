#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace qcdr {

/// Three-channel image stored channel-major (C, H, W) in double precision.
/// Synthesis and rectification clamp on write so values stay in [0, 1].
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;

  ImageBuffer() = default;
  ImageBuffer(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return kChannels; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const ImageBuffer& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  /// Writes v clamped to [0, 1]; NaN is written as 0.
  void set_clamped(int c, int y, int x, double v);
  void clamp();
  bool all_finite_in_unit_range() const;

  ImageBuffer rotated90() const;  // counter-clockwise

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// PNG / image codec. Files are 8-bit RGB; decoding accepts anything the codec reads.
std::vector<std::uint8_t> encode_png(const ImageBuffer& image);
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);
ImageBuffer read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& image);

/// Bilinear resize (half-pixel centres). Uses area averaging when shrinking.
ImageBuffer resize(const ImageBuffer& image, int height, int width);
/// The image as it reads back after an 8-bit PNG round trip.
ImageBuffer quantize8(const ImageBuffer& image);

/// Largest centred square crop.
ImageBuffer center_crop_square(const ImageBuffer& image);

/// Bilinear sample of one channel at continuous pixel coordinates; false if
/// (x, y) lies outside [0, W-1] x [0, H-1].
bool sample_bilinear(const ImageBuffer& image, int channel, double x, double y,
                     double& out);

}  // namespace qcdr
