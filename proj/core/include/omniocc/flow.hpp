#pragma once

#include <Eigen/Core>

#include "omniocc/image.hpp"

namespace omniocc {

/// Dense displacement field in pixels. u(x, y) maps pixel (x, y) of the
/// reference image to (x, y) + u in the target image.
struct FlowField {
  FlowField() = default;
  FlowField(int width, int height)
      : u(width, height, Eigen::Vector2d::Zero()), valid(width, height, 1) {}

  int width() const { return u.width(); }
  int height() const { return u.height(); }
  bool is_valid(int x, int y) const { return valid(x, y) != 0; }

  /// Marks non-finite vectors invalid and zeroes them.
  void sanitize();
  /// Rounds every vector to single precision (the on-disk representation).
  void quantize_to_float();

  Image<Eigen::Vector2d> u;
  Mask valid;
};

struct FlowParams {
  double lambda = 100.0;
  double theta = 0.3;
  double tau = 0.25;
  /// Inner iterations per pyramid level, split evenly across the warps.
  int iterations = 115;
  double pyramid_scale = 0.5;
  int levels = 6;
  int warps_per_level = 5;
  /// 3x3 median filter on the flow after every warp.
  bool median_filter = true;
  /// Horizontal wraparound (equirectangular azimuth). Rows always clamp.
  bool wrap_horizontal = true;
  /// Coarsest pyramid level is never smaller than this on its short side.
  int min_level_size = 8;

  /// Throws ConfigError on non-positive values or pyramid_scale outside (0, 1).
  void validate() const;
  int iterations_for_warp(int warp) const;
};

/// Multi-scale primal-dual TV-L1 flow from `reference` to `target`. Inputs are
/// grayscale in [0, 1]. Deterministic for any worker count.
FlowField compute_flow(const ScalarImage& reference, const ScalarImage& target,
                       const FlowParams& params);

/// TV-L1 objective summed over pixels:
///   sum_p |grad u_x(p)| + |grad u_y(p)| + lambda * |target(p + u(p)) - reference(p)|
/// with forward differences (horizontal wrap, zero past the last row) and
/// bilinear sampling of the target (horizontal wrap, rows clamped).
double tvl1_energy(const ScalarImage& reference, const ScalarImage& target, const FlowField& flow,
                   double lambda);

/// Backward warp: out(p) = field(p + u(p)) by bilinear sampling in index
/// coordinates. Columns wrap; samples with a non-zero weight on an invalid
/// pixel or on a row outside [0, height - 1] are invalid.
MaskedField warp_scalar_field(const MaskedField& field, const FlowField& flow);

/// Bilinear sample with horizontal wrap and clamped rows.
double sample_bilinear(const ScalarImage& image, double x, double y, bool wrap_horizontal);

}  // namespace omniocc
