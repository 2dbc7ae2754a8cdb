#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "omniocc/image.hpp"

namespace omniocc {

// Equirectangular convention
// --------------------------
// Continuous pixel coordinates p = (x, y) with x in [0, width], y in [0, height].
// Pixel (col, row) has its center at (col + 0.5, row + 0.5).
//   theta = pi * y / height        (polar angle from +z, rows)
//   phi   = 2 pi * x / width       (azimuth from +x toward +y, columns)
//   direction = (sin theta cos phi, sin theta sin phi, cos theta)
// Camera and world frames are right-handed with +z up. A pose maps camera
// directions to world rays as orientation * direction.

struct FrameDims {
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument unless width == 2 * height > 0.
  void validate() const;
  bool operator==(const FrameDims&) const = default;
};

/// Polar (theta) and azimuthal (phi) angles in radians.
struct AngularPoint {
  double theta = 0.0;
  double phi = 0.0;
};

struct CameraPose {
  CameraPose() = default;
  /// Throws std::invalid_argument if | |orientation| - 1 | > 1e-9.
  CameraPose(int index, Eigen::Vector3d position, Eigen::Quaterniond orientation);

  int index = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();

  Eigen::Vector3d to_world(const Eigen::Vector3d& camera_direction) const {
    return orientation * camera_direction;
  }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world_direction) const {
    return orientation.conjugate() * world_direction;
  }
};

/// Equirectangular RGB frame. Pixel values are linear-light RGB in [0, 1].
class SphericalFrame {
 public:
  SphericalFrame() = default;
  SphericalFrame(RgbImage pixels, int timestamp_index = 0);

  int width() const { return pixels_.width(); }
  int height() const { return pixels_.height(); }
  FrameDims dims() const { return {pixels_.width(), pixels_.height()}; }
  int timestamp_index() const { return timestamp_index_; }

  const RgbImage& pixels() const { return pixels_; }
  const Rgb& operator()(int x, int y) const { return pixels_(x, y); }

 private:
  RgbImage pixels_;
  int timestamp_index_ = 0;
};

AngularPoint pixel_to_angles(const Eigen::Vector2d& p, FrameDims dims);
Eigen::Vector2d angles_to_pixel(const AngularPoint& a, FrameDims dims);
Eigen::Vector3d angles_to_direction(const AngularPoint& a);
/// Pole directions report phi = 0.
AngularPoint direction_to_angles(const Eigen::Vector3d& d);

/// Unit direction in the camera frame. Throws std::domain_error when p lies
/// outside [0, width] x [0, height].
Eigen::Vector3d pixel_to_direction(const Eigen::Vector2d& p, FrameDims dims);

/// Inverse of pixel_to_direction. x is reported in [0, width). Throws
/// std::domain_error for zero or non-finite vectors.
Eigen::Vector2d direction_to_pixel(const Eigen::Vector3d& d, FrameDims dims);

/// Center of pixel (col, row).
inline Eigen::Vector2d pixel_center(int col, int row) { return {col + 0.5, row + 0.5}; }

/// Great-circle angle between two (not necessarily unit) vectors, in [0, pi].
double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

/// Angle between the viewing direction of p and the divergence point.
double parallax_angle(const Eigen::Vector2d& p, const AngularPoint& div, FrameDims dims);

/// Wraps x into [0, width).
double wrap_column(double x, double width);

/// Pixel rows whose centers fall on a pole (theta undefined azimuth). With
/// sampling at row + 0.5 no row center lies exactly on a pole, so these are
/// the first and last rows.
inline bool is_pole_row(int row, FrameDims dims) { return row == 0 || row == dims.height - 1; }

}  // namespace omniocc
