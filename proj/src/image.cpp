#include "qcdr/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "qcdr/errors.hpp"

namespace qcdr {

namespace {

cv::Mat to_mat(const ImageBuffer& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        // OpenCV stores BGR.
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return mat;
}

ImageBuffer from_mat(const cv::Mat& mat) {
  cv::Mat rgb8;
  if (mat.channels() == 1) {
    cv::cvtColor(mat, rgb8, cv::COLOR_GRAY2BGR);
  } else if (mat.channels() == 4) {
    cv::cvtColor(mat, rgb8, cv::COLOR_BGRA2BGR);
  } else {
    rgb8 = mat;
  }
  double scale = 1.0 / 255.0;
  if (rgb8.depth() == CV_16U) scale = 1.0 / 65535.0;
  cv::Mat as_double;
  rgb8.convertTo(as_double, CV_64FC3, scale);
  ImageBuffer image(as_double.rows, as_double.cols);
  for (int y = 0; y < as_double.rows; ++y) {
    const auto* row = as_double.ptr<cv::Vec3d>(y);
    for (int x = 0; x < as_double.cols; ++x) {
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = row[x][2 - c];
    }
  }
  return image;
}

}  // namespace

ImageBuffer::ImageBuffer(int height, int width, double fill)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) {
    throw DimensionError("image dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(kChannels) * height * width, fill);
}

void ImageBuffer::set_clamped(int c, int y, int x, double v) {
  at(c, y, x) = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
}

void ImageBuffer::clamp() {
  for (double& v : data_) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
}

bool ImageBuffer::all_finite_in_unit_range() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

ImageBuffer ImageBuffer::rotated90() const {
  ImageBuffer out(width_, height_);
  // Counter-clockwise: out(y', x') = in(x', W-1-y') with out of size W x H.
  for (int c = 0; c < kChannels; ++c) {
    for (int y = 0; y < out.height_; ++y) {
      for (int x = 0; x < out.width_; ++x) {
        out.at(c, y, x) = at(c, x, width_ - 1 - y);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
  std::vector<std::uint8_t> bytes;
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imencode(".png", to_mat(image), bytes, params)) {
    throw std::runtime_error("PNG encoding failed");
  }
  return bytes;
}

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw ValidationError("empty image payload");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
                    const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw ValidationError("image payload could not be decoded");
  return from_mat(mat);
}

ImageBuffer quantize8(const ImageBuffer& image) {
  ImageBuffer out = image;
  constexpr double kScale = 1.0 / 255.0;  // same arithmetic as the decoder
  for (double& v : out.values()) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) * kScale;
  return out;
}

ImageBuffer read_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw DataError("cannot decode image: " + path.string());
  return from_mat(mat);
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), to_mat(image), params)) {
    throw std::runtime_error("cannot write PNG: " + path.string());
  }
}

ImageBuffer resize(const ImageBuffer& image, int height, int width) {
  if (height <= 0 || width <= 0) throw DimensionError("resize target must be positive");
  if (image.height() == height && image.width() == width) return image;
  ImageBuffer out(height, width);
  const bool shrinking = height < image.height() || width < image.width();
  for (int c = 0; c < 3; ++c) {
    cv::Mat plane(image.height(), image.width(), CV_64FC1,
                  const_cast<double*>(image.values().data()) +
                      static_cast<std::size_t>(c) * image.height() * image.width());
    cv::Mat dst(height, width, CV_64FC1,
                out.values().data() + static_cast<std::size_t>(c) * height * width);
    cv::resize(plane, dst, dst.size(), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  out.clamp();
  return out;
}

ImageBuffer center_crop_square(const ImageBuffer& image) {
  const int side = std::min(image.height(), image.width());
  const int y0 = (image.height() - side) / 2;
  const int x0 = (image.width() - side) / 2;
  if (side == image.height() && side == image.width()) return image;
  ImageBuffer out(side, side);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) out.at(c, y, x) = image.at(c, y + y0, x + x0);
  return out;
}

bool sample_bilinear(const ImageBuffer& image, int channel, double x, double y,
                     double& out) {
  constexpr double kSlack = 1e-9;
  const double max_x = image.width() - 1;
  const double max_y = image.height() - 1;
  if (x < -kSlack || y < -kSlack || x > max_x + kSlack || y > max_y + kSlack) return false;
  x = std::clamp(x, 0.0, max_x);
  y = std::clamp(y, 0.0, max_y);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, image.width() - 1);
  const int y1 = std::min(y0 + 1, image.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * image.at(channel, y0, x0) + fx * image.at(channel, y0, x1);
  const double bottom = (1.0 - fx) * image.at(channel, y1, x0) + fx * image.at(channel, y1, x1);
  out = (1.0 - fy) * top + fy * bottom;
  return true;
}

}  // namespace qcdr
