#include "omniocc/image.hpp"

#include <array>

namespace omniocc {

ScalarImage to_grayscale(const RgbImage& image) {
  ScalarImage gray(image.width(), image.height());
  for (std::size_t i = 0; i < image.size(); ++i) gray[i] = luminance(image[i]);
  return gray;
}

double srgb_to_linear(double encoded) {
  const double c = clamp01(encoded);
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double linear) {
  const double c = clamp01(linear);
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

namespace {

const std::array<double, 256>& decode_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = srgb_to_linear(i / 255.0);
    return t;
  }();
  return table;
}

}  // namespace

double srgb_byte_to_linear(std::uint8_t value) { return decode_table()[value]; }

std::uint8_t linear_to_srgb_byte(double linear) {
  const double encoded = linear_to_srgb(linear) * 255.0;
  return static_cast<std::uint8_t>(std::clamp(std::lround(encoded), 0L, 255L));
}

}  // namespace omniocc
