#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace omniocc {

/// Row-major 2D buffer. Pixel (x, y) lives at index y * width + x.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) {
      throw std::invalid_argument("Image: negative dimensions");
    }
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }
  std::span<T> row(int y) {
    return std::span<T>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }
  std::span<const T> row(int y) const {
    return std::span<const T>(data_).subspan(static_cast<std::size_t>(y) * width_, width_);
  }

  template <typename U>
  bool same_shape(const Image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  void fill(const T& value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  bool operator==(const Rgb&) const = default;
};

struct Rgba {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  double a = 0.0;
  bool operator==(const Rgba&) const = default;
};

using ScalarImage = Image<double>;
using Mask = Image<std::uint8_t>;
using RgbImage = Image<Rgb>;
using RgbaImage = Image<Rgba>;

/// Scalar field with a per-pixel validity mask. Values at invalid pixels are
/// unspecified and must not be read.
struct MaskedField {
  MaskedField() = default;
  MaskedField(int width, int height)
      : values(width, height, 0.0), valid(width, height, 0) {}

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  bool is_valid(int x, int y) const { return valid(x, y) != 0; }
  std::size_t valid_count() const {
    return static_cast<std::size_t>(
        std::count_if(valid.pixels().begin(), valid.pixels().end(),
                      [](std::uint8_t v) { return v != 0; }));
  }

  ScalarImage values;
  Mask valid;
};

/// Luminance weights used for both grayscale conversion and salience luma.
inline double luminance(const Rgb& c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }
inline double luminance(const Rgba& c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

ScalarImage to_grayscale(const RgbImage& image);

// sRGB transfer functions on [0, 1].
double srgb_to_linear(double encoded);
double linear_to_srgb(double linear);

/// Exact 8-bit sRGB decode (table based, so decode/encode of a byte is lossless).
double srgb_byte_to_linear(std::uint8_t value);
std::uint8_t linear_to_srgb_byte(double linear);

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace omniocc
