#include "omniocc/sphere_geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace omniocc {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

void FrameDims::validate() const {
  if (width <= 0 || height <= 0 || width != 2 * height) {
    throw std::invalid_argument("equirectangular frame must satisfy width == 2 * height, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
}

CameraPose::CameraPose(int idx, Eigen::Vector3d pos, Eigen::Quaterniond q)
    : index(idx), position(std::move(pos)), orientation(q) {
  if (std::abs(q.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("CameraPose: orientation quaternion is not unit length");
  }
}

SphericalFrame::SphericalFrame(RgbImage pixels, int timestamp_index)
    : pixels_(std::move(pixels)), timestamp_index_(timestamp_index) {
  dims().validate();
}

double wrap_column(double x, double width) {
  double w = std::fmod(x, width);
  if (w < 0.0) w += width;
  // fmod of a tiny negative number can round up to width itself.
  if (w >= width) w = 0.0;
  return w;
}

AngularPoint pixel_to_angles(const Eigen::Vector2d& p, FrameDims dims) {
  return {kPi * p.y() / dims.height, kTwoPi * p.x() / dims.width};
}

Eigen::Vector2d angles_to_pixel(const AngularPoint& a, FrameDims dims) {
  return {wrap_column(a.phi / kTwoPi * dims.width, dims.width), a.theta / kPi * dims.height};
}

Eigen::Vector3d angles_to_direction(const AngularPoint& a) {
  const double st = std::sin(a.theta);
  return {st * std::cos(a.phi), st * std::sin(a.phi), std::cos(a.theta)};
}

AngularPoint direction_to_angles(const Eigen::Vector3d& d) {
  const double horizontal = std::hypot(d.x(), d.y());
  const double theta = std::atan2(horizontal, d.z());
  if (horizontal == 0.0) return {theta, 0.0};
  double phi = std::atan2(d.y(), d.x());
  if (phi < 0.0) phi += kTwoPi;
  if (phi >= kTwoPi) phi = 0.0;
  return {theta, phi};
}

Eigen::Vector3d pixel_to_direction(const Eigen::Vector2d& p, FrameDims dims) {
  if (!(p.x() >= 0.0 && p.x() <= dims.width && p.y() >= 0.0 && p.y() <= dims.height)) {
    throw std::domain_error("pixel_to_direction: pixel outside image bounds");
  }
  return angles_to_direction(pixel_to_angles(p, dims));
}

Eigen::Vector2d direction_to_pixel(const Eigen::Vector3d& d, FrameDims dims) {
  const double n = d.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::domain_error("direction_to_pixel: zero or non-finite direction");
  }
  return angles_to_pixel(direction_to_angles(d / n), dims);
}

double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

double parallax_angle(const Eigen::Vector2d& p, const AngularPoint& div, FrameDims dims) {
  if (!(div.theta >= 0.0 && div.theta <= kPi)) {
    throw std::domain_error("parallax_angle: divergence theta outside [0, pi]");
  }
  return angle_between(pixel_to_direction(p, dims), angles_to_direction(div));
}

}  // namespace omniocc
