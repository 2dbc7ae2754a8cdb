#include "omniocc/depth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "omniocc/errors.hpp"
#include "omniocc/parallel.hpp"

namespace omniocc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int wrap_index(int x, int width) {
  x %= width;
  return x < 0 ? x + width : x;
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

void require_dims(const FlowField& flow, FrameDims dims) {
  dims.validate();
  if (flow.width() != dims.width || flow.height() != dims.height) {
    throw std::invalid_argument("flow dimensions do not match the frame");
  }
}

// Shared per-pixel kernel. The output map lives on the grid of one camera
// (current or previous); the flow moves each grid pixel into the other frame.
TriangulationResult triangulate(const FlowField& flow, FrameDims dims, const CameraPose& pose_prev,
                                const CameraPose& pose_curr, const AngularPoint& div,
                                const TriangulationParams& params, bool grid_is_current) {
  require_dims(flow, dims);
  TriangulationResult result{DepthMap(dims.width, dims.height), TriangulationStatus::ok};
  const double baseline = (pose_curr.position - pose_prev.position).norm();
  if (!(baseline > params.baseline_min)) {
    result.status = TriangulationStatus::baseline_too_small;
    return result;
  }
  const Eigen::Vector3d motion = pose_curr.to_world(angles_to_direction(div));
  const CameraPose& grid_pose = grid_is_current ? pose_curr : pose_prev;
  const CameraPose& other_pose = grid_is_current ? pose_prev : pose_curr;

  parallel_rows(dims.height, [&](int y) {
    for (int x = 0; x < dims.width; ++x) {
      if (!flow.is_valid(x, y)) continue;
      const Eigen::Vector2d p = pixel_center(x, y);
      Eigen::Vector2d q = p + flow.u(x, y);
      if (!(q.y() >= 0.0 && q.y() <= dims.height) || !std::isfinite(q.x())) continue;
      q.x() = wrap_column(q.x(), dims.width);
      const Eigen::Vector3d ray_grid = grid_pose.to_world(pixel_to_direction(p, dims));
      const Eigen::Vector3d ray_other = other_pose.to_world(pixel_to_direction(q, dims));
      const Eigen::Vector3d& ray_prev = grid_is_current ? ray_other : ray_grid;
      const Eigen::Vector3d& ray_curr = grid_is_current ? ray_grid : ray_other;
      const double d = triangulate_from_angles(baseline, angle_between(ray_prev, motion),
                                               angle_between(ray_curr, motion), params);
      if (std::isnan(d)) continue;
      result.depth.values(x, y) = d;
      result.depth.valid(x, y) = 1;
    }
  });
  return result;
}

void check_history(std::span<const DepthHistoryEntry> history) {
  if (history.empty()) throw std::invalid_argument("fuse_depth_temporal: empty history");
  const auto& newest = history.back().depth;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (!history[i].depth.values.same_shape(newest.values)) {
      throw std::invalid_argument("fuse_depth_temporal: depth dimensions differ");
    }
    if (i > 0 && !history[i].flow_to_previous.u.same_shape(newest.values)) {
      throw std::invalid_argument("fuse_depth_temporal: flow dimensions differ");
    }
  }
}

// Warps a field living on the grid of history[index] to the newest grid.
MaskedField warp_to_newest(MaskedField field, std::span<const DepthHistoryEntry> history,
                           std::size_t index) {
  for (std::size_t j = index + 1; j < history.size(); ++j) {
    field = warp_scalar_field(field, history[j].flow_to_previous);
  }
  return field;
}

// Equal-weight mean of the samples, clamped to their range so that rounding
// never leaves [min, max].
class SampleAccumulator {
 public:
  SampleAccumulator(int width, int height)
      : sum_(width, height), min_(width, height, std::numeric_limits<double>::infinity()),
        max_(width, height, -std::numeric_limits<double>::infinity()), count_(width, height, 0) {}

  void add(const MaskedField& field) {
    for (std::size_t i = 0; i < field.values.size(); ++i) {
      if (!field.valid[i]) continue;
      const double v = field.values[i];
      sum_[i] += v;
      min_[i] = std::min(min_[i], v);
      max_[i] = std::max(max_[i], v);
      ++count_[i];
    }
  }

  DepthMap mean() const {
    DepthMap out(sum_.width(), sum_.height());
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      if (count_[i] == 0) continue;
      out.values[i] = std::clamp(sum_[i] / count_[i], min_[i], max_[i]);
      out.valid[i] = 1;
    }
    return out;
  }

 private:
  ScalarImage sum_, min_, max_;
  Image<int> count_;
};

}  // namespace

DivergenceResult find_divergence_point(const FlowField& flow, FrameDims dims,
                                       const DivergenceSearchRegion& region,
                                       const DivergenceParams& params) {
  require_dims(flow, dims);
  if (params.kernel_size < 3 || params.kernel_size % 2 == 0) {
    throw ConfigError("divergence kernel size must be odd and >= 3");
  }
  const int w = dims.width;
  const int h = dims.height;
  const Eigen::Vector2d c = angles_to_pixel(region.center, dims);
  const double hx = region.half_phi / (2.0 * std::numbers::pi) * w;
  const double hy = region.half_theta / std::numbers::pi * h;
  if (!(hx >= 0.0 && hy >= 0.0)) throw std::invalid_argument("divergence region has negative extent");

  // Candidate pixels: centers inside the (clamped) rectangle, nearest pixel at least.
  const int row_lo = std::clamp(static_cast<int>(std::ceil(c.y() - hy - 0.5)), 0, h - 1);
  const int row_hi = std::clamp(static_cast<int>(std::floor(c.y() + hy - 0.5)), row_lo, h - 1);
  const int col_lo = static_cast<int>(std::ceil(c.x() - hx - 0.5));
  const int col_hi = std::max(col_lo, static_cast<int>(std::floor(c.x() + hx - 0.5)));
  const int cols = std::min(col_hi - col_lo + 1, w);

  DivergenceResult result{region.center, 0.0, true};
  std::size_t valid = 0;
  std::size_t total = 0;
  for (int y = row_lo; y <= row_hi; ++y) {
    for (int i = 0; i < cols; ++i) {
      ++total;
      valid += flow.is_valid(wrap_index(col_lo + i, w), y) ? 1 : 0;
    }
  }
  if (static_cast<double>(valid) < params.min_valid_fraction * static_cast<double>(total)) {
    return result;
  }

  const int r = params.kernel_size / 2;
  std::vector<Eigen::Vector2d> offsets;
  std::vector<Eigen::Vector2d> kernel;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx == 0 && dy == 0) continue;
      offsets.emplace_back(dx, dy);
      kernel.push_back(Eigen::Vector2d(dx, dy).normalized());
    }
  }
  const double norm = static_cast<double>(kernel.size());

  auto unit_flow = [&](int x, int y, Eigen::Vector2d& out) {
    if (y < 0 || y >= h) return false;
    x = wrap_index(x, w);
    if (!flow.is_valid(x, y)) return false;
    const double n = flow.u(x, y).norm();
    if (!(n > 1e-12)) return false;
    out = flow.u(x, y) / n;
    return true;
  };

  double best = 0.0;
  int best_x = -1;
  int best_y = -1;
  for (int y = row_lo; y <= row_hi; ++y) {
    for (int i = 0; i < cols; ++i) {
      const int x = col_lo + i;
      double response = 0.0;
      Eigen::Vector2d dir;
      for (std::size_t k = 0; k < kernel.size(); ++k) {
        if (unit_flow(x + static_cast<int>(offsets[k].x()), y + static_cast<int>(offsets[k].y()), dir)) {
          response += dir.dot(kernel[k]);
        }
      }
      response /= norm;
      if (std::abs(response) > std::abs(best)) {
        best = response;
        best_x = wrap_index(x, w);
        best_y = y;
      }
    }
  }
  if (best_x < 0 || std::abs(best) < params.min_response) return result;
  Eigen::Vector2d point = pixel_center(best_x, best_y);
  if (params.subpixel) {
    // Point closest, in the least-squares sense, to every flow line through
    // the window around the peak. Columns are unwrapped relative to the peak.
    Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    Eigen::Vector2d dir;
    for (const auto& off : offsets) {
      const int x = best_x + static_cast<int>(off.x());
      const int y = best_y + static_cast<int>(off.y());
      if (!unit_flow(x, y, dir)) continue;
      const Eigen::Matrix2d proj = Eigen::Matrix2d::Identity() - dir * dir.transpose();
      a += proj;
      b += proj * pixel_center(x, y);
    }
    if (std::abs(a.determinant()) > 1e-6 * (a.trace() * a.trace() + 1e-12)) {
      const Eigen::Vector2d refined = a.ldlt().solve(b);
      if (refined.allFinite() && (refined - point).cwiseAbs().maxCoeff() <= 1.0) {
        point = {wrap_column(refined.x(), w), std::clamp(refined.y(), 0.0, static_cast<double>(h))};
      }
    }
  }
  result.point = pixel_to_angles(point, dims);
  result.response = best;
  result.fallback = false;
  return result;
}

AngularPoint refine_motion_direction(const FlowField& flow, FrameDims dims,
                                     const CameraPose& pose_prev, const CameraPose& pose_curr,
                                     const AngularPoint& initial) {
  require_dims(flow, dims);
  constexpr int kIterations = 6;
  constexpr std::size_t kMinPoints = 50;
  // Rays below this parallax (radians) carry no usable direction.
  constexpr double kMinParallax = 1e-5;
  const Eigen::Matrix3d prev_to_curr =
      (pose_curr.orientation.conjugate() * pose_prev.orientation).toRotationMatrix();
  const int w = dims.width;
  const int h = dims.height;

  std::vector<Eigen::Vector3d> normals;
  std::vector<double> strength;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!flow.is_valid(x, y)) continue;
      const Eigen::Vector2d p = pixel_center(x, y);
      const Eigen::Vector2d q = p + flow.u(x, y);
      if (!(q.y() > 0.0 && q.y() < h) || !std::isfinite(q.x())) continue;
      const Eigen::Vector3d d_curr = pixel_to_direction(p, dims);
      const Eigen::Vector3d d_prev =
          prev_to_curr * pixel_to_direction({wrap_column(q.x(), w), q.y()}, dims);
      const Eigen::Vector3d c = d_curr.cross(d_prev);
      const double n = c.norm();
      if (!(n > kMinParallax)) continue;
      normals.push_back(c / n);
      strength.push_back(n);
    }
  }
  if (normals.size() < kMinPoints) return initial;

  const Eigen::Vector3d start = angles_to_direction(initial);
  Eigen::Vector3d m = start;
  std::vector<double> weights(normals.size());
  std::vector<double> residuals(normals.size());
  // Weights always come from the residuals of the current estimate, starting
  // with `initial`; an unweighted first solve can be captured by a large
  // region of bad flow (untextured sky, for example).
  auto reweight = [&] {
    for (std::size_t i = 0; i < normals.size(); ++i) residuals[i] = std::abs(m.dot(normals[i]));
    std::vector<double> sorted = residuals;
    const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double scale = std::max(1.4826 * *mid, 1e-4);
    for (std::size_t i = 0; i < normals.size(); ++i) {
      const double r = residuals[i] / scale;
      weights[i] = 1.0 / (1.0 + r * r);
    }
  };
  for (int iter = 0; iter < kIterations; ++iter) {
    reweight();
    Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < normals.size(); ++i) {
      a += (weights[i] * strength[i]) * normals[i] * normals[i].transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(a);
    if (eig.info() != Eigen::Success) return initial;
    m = eig.eigenvectors().col(0);
    if (m.dot(start) < 0.0) m = -m;
  }
  return direction_to_angles(m);
}

double triangulate_from_angles(double baseline, double alpha_prev, double alpha_curr,
                               const TriangulationParams& params) {
  const double s = std::sin(alpha_curr - alpha_prev);
  if (!(s > std::sin(deg_to_rad(params.epsilon_deg)))) return kNaN;
  const double numerator = std::sin(params.literal_numerator ? alpha_curr : alpha_prev);
  const double d = baseline * numerator / s;
  if (!(d > 0.0) || !std::isfinite(d)) return kNaN;
  return std::min(d, params.d_max);
}

TriangulationResult triangulate_depth(const FlowField& flow_prev_to_curr, FrameDims dims,
                                      const CameraPose& pose_prev, const CameraPose& pose_curr,
                                      const AngularPoint& div, const TriangulationParams& params) {
  return triangulate(flow_prev_to_curr, dims, pose_prev, pose_curr, div, params, false);
}

TriangulationResult triangulate_depth_backward(const FlowField& flow_curr_to_prev, FrameDims dims,
                                               const CameraPose& pose_prev,
                                               const CameraPose& pose_curr,
                                               const AngularPoint& div,
                                               const TriangulationParams& params) {
  return triangulate(flow_curr_to_prev, dims, pose_prev, pose_curr, div, params, true);
}

DepthMap fuse_depth_temporal(std::span<const DepthHistoryEntry> history) {
  check_history(history);
  if (history.size() == 1) return history.front().depth;
  const auto& newest = history.back().depth;
  SampleAccumulator acc(newest.width(), newest.height());
  for (std::size_t i = 0; i < history.size(); ++i) {
    acc.add(warp_to_newest(history[i].depth, history, i));
  }
  return acc.mean();
}

DepthMap fuse_depth_temporal_compensated(std::span<const DepthHistoryEntry> history,
                                         std::span<const CameraPose> poses) {
  check_history(history);
  if (poses.size() != history.size()) {
    throw std::invalid_argument("fuse_depth_temporal_compensated: one pose per history entry");
  }
  if (history.size() == 1) return history.front().depth;
  const int w = history.back().depth.width();
  const int h = history.back().depth.height();
  const FrameDims dims{w, h};
  const Eigen::Vector3d newest_center = poses.back().position;
  SampleAccumulator acc(w, h);
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& depth = history[i].depth;
    if (i + 1 == history.size()) {
      acc.add(depth);
      continue;
    }
    std::array<MaskedField, 3> coords{MaskedField(w, h), MaskedField(w, h), MaskedField(w, h)};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!depth.is_valid(x, y)) continue;
        const Eigen::Vector3d point =
            poses[i].position +
            depth.values(x, y) * poses[i].to_world(pixel_to_direction(pixel_center(x, y), dims));
        for (int k = 0; k < 3; ++k) {
          coords[k].values(x, y) = point[k];
          coords[k].valid(x, y) = 1;
        }
      }
    }
    for (auto& field : coords) field = warp_to_newest(std::move(field), history, i);
    MaskedField measured(w, h);
    for (std::size_t p = 0; p < measured.values.size(); ++p) {
      if (!coords[0].valid[p] || !coords[1].valid[p] || !coords[2].valid[p]) continue;
      const Eigen::Vector3d point(coords[0].values[p], coords[1].values[p], coords[2].values[p]);
      measured.values[p] = (point - newest_center).norm();
      measured.valid[p] = measured.values[p] > 0.0 ? 1 : 0;
    }
    acc.add(measured);
  }
  return acc.mean();
}

ProbabilityMap foreground_probability(const DepthMap& d_real, const DepthMap& d_cg, double k,
                                      double p_unknown) {
  if (!d_real.values.same_shape(d_cg.values)) {
    throw std::invalid_argument("foreground_probability: dimension mismatch");
  }
  if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError("foreground_probability: k must be positive");
  if (!(p_unknown >= 0.0 && p_unknown <= 1.0)) {
    throw ConfigError("foreground_probability: p_unknown must lie in [0, 1]");
  }
  ProbabilityMap prob(d_real.width(), d_real.height(), 0.0);
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (!d_cg.valid[i]) continue;
    if (!d_real.valid[i]) {
      prob[i] = p_unknown;
      continue;
    }
    prob[i] = 1.0 / (1.0 + std::exp(-k * (d_cg.values[i] - d_real.values[i])));
  }
  return prob;
}

AngularPoint motion_direction(const CameraPose& pose_prev, const CameraPose& pose_curr) {
  const Eigen::Vector3d delta = pose_curr.position - pose_prev.position;
  if (!(delta.norm() > 0.0)) return {std::numbers::pi / 2.0, 0.0};
  return direction_to_angles(pose_curr.to_camera(delta));
}

}  // namespace omniocc
