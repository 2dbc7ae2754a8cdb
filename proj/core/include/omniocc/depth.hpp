#pragma once

#include <span>
#include <vector>

#include "omniocc/flow.hpp"
#include "omniocc/image.hpp"
#include "omniocc/sphere_geometry.hpp"

namespace omniocc {

/// Per-pixel metric depth (distance from the camera center) with validity.
/// Valid depths lie in (0, d_max].
using DepthMap = MaskedField;

/// Foreground probability P_f in [0, 1].
using ProbabilityMap = ScalarImage;

struct DivergenceSearchRegion {
  AngularPoint center;
  double half_theta = 0.0;  // radians
  double half_phi = 0.0;    // radians
};

struct DivergenceParams {
  /// Side of the square correlation kernel, in pixels (odd).
  int kernel_size = 9;
  /// Minimum fraction of valid flow vectors inside the region.
  double min_valid_fraction = 0.5;
  /// Peak |response| below this is treated as "no divergence" (fallback).
  double min_response = 0.2;
  /// Refine the peak to the least-squares intersection of the flow lines in
  /// the kernel window around it (kept only if within one pixel of the peak).
  bool subpixel = true;
};

struct DivergenceResult {
  AngularPoint point;
  /// Response at the selected pixel: +1 for an ideal expanding field, -1 for
  /// an ideal contracting field.
  double response = 0.0;
  /// True when the region center was returned because the flow was
  /// insufficient or showed no divergence.
  bool fallback = false;
};

/// Locates the focus of expansion inside a rectangular region.
///
/// The unit flow directions are correlated with a radial kernel k(q) = q/|q|
/// over a square window. At an ideal expansion center every vector points
/// away from the window center and the normalized response is +1; at a
/// contraction center it is -1. The pixel with the largest |response| wins
/// (first in row-major order on ties). Columns wrap; rows clamp to the image.
DivergenceResult find_divergence_point(const FlowField& flow, FrameDims dims,
                                       const DivergenceSearchRegion& region,
                                       const DivergenceParams& params = {});

/// Motion direction most consistent with a backward flow under the known
/// relative rotation. Each correspondence's two rays span a plane containing
/// the translation, so the estimate minimizes sum_i w_i (m . n_i)^2 over the
/// unit plane normals n_i, with Cauchy reweighting against flow outliers and
/// weights growing with parallax. Returns `initial` when the flow carries too
/// little parallax; the sign is chosen to face `initial`.
AngularPoint refine_motion_direction(const FlowField& flow_curr_to_prev, FrameDims dims,
                                     const CameraPose& pose_prev, const CameraPose& pose_curr,
                                     const AngularPoint& initial);

struct TriangulationParams {
  /// Pixels with sin(alpha_t - alpha_{t-1}) <= sin(epsilon) are invalid.
  double epsilon_deg = 0.2;
  double d_max = 1000.0;
  double baseline_min = 0.01;
  /// When true the numerator uses sin(alpha_t), which gives the distance from
  /// the previous camera instead of the current one.
  bool literal_numerator = false;
};

enum class TriangulationStatus { ok, baseline_too_small };

struct TriangulationResult {
  DepthMap depth;
  TriangulationStatus status = TriangulationStatus::ok;
};

/// Law-of-sines depth for one correspondence: parallax angles against the
/// motion direction at the previous and current camera.
/// Returns NaN when the configuration is singular or the depth is negative.
double triangulate_from_angles(double baseline, double alpha_prev, double alpha_curr,
                               const TriangulationParams& params);

/// Depth from a forward flow (defined on the previous frame grid, pointing to
/// the current frame). The map is indexed by previous-frame pixels; values
/// are distances from the current camera. `div` is expressed in the current
/// camera frame.
TriangulationResult triangulate_depth(const FlowField& flow_prev_to_curr, FrameDims dims,
                                      const CameraPose& pose_prev, const CameraPose& pose_curr,
                                      const AngularPoint& div,
                                      const TriangulationParams& params = {});

/// Same law-of-sines triangulation from a backward flow defined on the
/// current frame grid (pointing to the previous frame), so the resulting map
/// is indexed by current-frame pixels. This is the form the pipeline uses.
TriangulationResult triangulate_depth_backward(const FlowField& flow_curr_to_prev, FrameDims dims,
                                               const CameraPose& pose_prev,
                                               const CameraPose& pose_curr,
                                               const AngularPoint& div,
                                               const TriangulationParams& params = {});

/// One history entry: the depth of frame k and the backward flow from frame k
/// to frame k-1 (unused for the oldest entry).
struct DepthHistoryEntry {
  DepthMap depth;
  FlowField flow_to_previous;
};

/// Warps every older depth map to the newest frame by chaining backward warps
/// and averages the valid samples with equal weights. History is ordered
/// oldest first. Throws std::invalid_argument on an empty history.
DepthMap fuse_depth_temporal(std::span<const DepthHistoryEntry> history);

/// Variant that warps the world-space points behind each depth sample and
/// re-measures them from the newest camera, so depths from different frames
/// refer to the same camera center before averaging. `poses` aligns with
/// `history`.
DepthMap fuse_depth_temporal_compensated(std::span<const DepthHistoryEntry> history,
                                         std::span<const CameraPose> poses);

/// P_f = 1 / (1 + exp(-k (d_cg - d_real))) where both depths are valid,
/// p_unknown where only the CG depth is valid, 0 where there is no CG.
ProbabilityMap foreground_probability(const DepthMap& d_real, const DepthMap& d_cg,
                                      double k = 1.0, double p_unknown = 0.5);

/// Motion direction (c_curr - c_prev) expressed as angles in the current
/// camera frame.
AngularPoint motion_direction(const CameraPose& pose_prev, const CameraPose& pose_curr);

}  // namespace omniocc
