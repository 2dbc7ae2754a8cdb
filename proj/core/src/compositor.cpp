#include "omniocc/compositor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "omniocc/errors.hpp"
#include "omniocc/parallel.hpp"

namespace omniocc {

namespace {

void require_aligned(const SphericalFrame& real, const CgLayer& cg) {
  if (real.width() != cg.width() || real.height() != cg.height() ||
      !cg.color.same_shape(cg.depth.values)) {
    throw std::invalid_argument("compositor: frame and CG layer dimensions differ");
  }
}

Rgb mix(const Rgb& real, const Rgba& cg, double alpha) {
  return {clamp01(alpha * cg.r + (1.0 - alpha) * real.r),
          clamp01(alpha * cg.g + (1.0 - alpha) * real.g),
          clamp01(alpha * cg.b + (1.0 - alpha) * real.b)};
}

int tiles(int extent, int window) { return (extent + window - 1) / window; }

// Per-pixel opacity by bilinear interpolation between window centers. Only
// covered windows contribute; their weights are renormalized.
ScalarImage interpolate_alpha(const WindowGrid& grid, const ScalarImage& window_alpha,
                              const CgLayer& cg) {
  const int w = cg.width();
  const int h = cg.height();
  const int win = grid.window;
  ScalarImage alpha(w, h, 0.0);
  parallel_rows(h, [&](int y) {
    const double fy = (y + 0.5) / win - 0.5;
    const int j0 = static_cast<int>(std::floor(fy));
    const double b = fy - j0;
    for (int x = 0; x < w; ++x) {
      if (!cg.covers(x, y)) continue;
      const double fx = (x + 0.5) / win - 0.5;
      const int i0 = static_cast<int>(std::floor(fx));
      const double a = fx - i0;
      const std::array<int, 4> is{i0, i0 + 1, i0, i0 + 1};
      const std::array<int, 4> js{j0, j0, j0 + 1, j0 + 1};
      const std::array<double, 4> ws{(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b};
      double num = 0.0;
      double den = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int i = std::clamp(is[k], 0, grid.cols() - 1);
        const int j = std::clamp(js[k], 0, grid.rows() - 1);
        if (!grid.covered(i, j) || ws[k] == 0.0) continue;
        num += ws[k] * window_alpha(i, j);
        den += ws[k];
      }
      alpha(x, y) = den > 0.0 ? clamp01(num / den) : 0.0;
    }
  });
  return alpha;
}

BlendResult windowed_blend(const SphericalFrame& real, const CgLayer& cg, const ScalarImage& v_cg,
                           const BlendConfig& cfg, const VisibilityModel& model) {
  cfg.validate();
  require_aligned(real, cg);
  if (!v_cg.same_shape(cg.color)) {
    throw std::invalid_argument("visibility_blend: visibility field dimensions differ");
  }
  const WindowGrid grid = model.contrast(real.pixels(), cg, cfg);

  ScalarImage target_sum(grid.cols(), grid.rows(), 0.0);
  Image<int> count(grid.cols(), grid.rows(), 0);
  for (int y = 0; y < cg.height(); ++y) {
    for (int x = 0; x < cg.width(); ++x) {
      if (!cg.covers(x, y)) continue;
      target_sum(x / grid.window, y / grid.window) += v_cg(x, y);
      ++count(x / grid.window, y / grid.window);
    }
  }
  ScalarImage window_alpha(grid.cols(), grid.rows(), 0.0);
  for (int j = 0; j < grid.rows(); ++j) {
    for (int i = 0; i < grid.cols(); ++i) {
      if (!grid.covered(i, j) || count(i, j) == 0) continue;
      window_alpha(i, j) = model.opacity(target_sum(i, j) / count(i, j), grid.values(i, j), cfg);
    }
  }

  BlendResult result{real, interpolate_alpha(grid, window_alpha, cg)};
  RgbImage out = real.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (cg.covers(i)) out[i] = mix(real.pixels()[i], cg.color[i], result.alpha[i]);
  }
  result.composite = SphericalFrame(std::move(out), real.timestamp_index());
  return result;
}

}  // namespace

void CgLayer::validate() const {
  if (!color.same_shape(depth.values)) throw DataError("CG layer: color and depth dimensions differ");
  for (std::size_t i = 0; i < color.size(); ++i) {
    if (covers(i) && !depth.valid[i]) {
      throw DataError("CG layer: depth missing inside the coverage mask");
    }
  }
}

std::string_view to_string(BlendMode mode) {
  switch (mode) {
    case BlendMode::visibility: return "visibility";
    case BlendMode::alpha: return "alpha";
    case BlendMode::fixed_transparency: return "fixed_transparency";
  }
  return "visibility";
}

std::optional<BlendMode> blend_mode_from_string(std::string_view name) {
  for (auto m : {BlendMode::visibility, BlendMode::alpha, BlendMode::fixed_transparency}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

void BlendConfig::validate() const {
  if (window < 4) throw ConfigError("blend: window must be >= 4");
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ConfigError("blend: kappa must be positive");
  if (!(epsilon_d > 0.0) || !std::isfinite(epsilon_d)) {
    throw ConfigError("blend: epsilon_d must be positive");
  }
}

WindowGrid local_salience(const RgbImage& real, const CgLayer& cg, const BlendConfig& cfg) {
  if (cfg.window < 4) throw ConfigError("blend: window must be >= 4");
  if (!real.same_shape(cg.color)) throw std::invalid_argument("local_salience: dimension mismatch");
  const int win = cfg.window;
  WindowGrid grid{win, ScalarImage(tiles(real.width(), win), tiles(real.height(), win), 0.0),
                  Mask(tiles(real.width(), win), tiles(real.height(), win), 0)};
  ScalarImage diff_sum(grid.cols(), grid.rows(), 0.0);
  ScalarImage luma_sum(grid.cols(), grid.rows(), 0.0);
  Image<int> count(grid.cols(), grid.rows(), 0);
  for (int y = 0; y < real.height(); ++y) {
    for (int x = 0; x < real.width(); ++x) {
      if (!cg.covers(x, y)) continue;
      const double real_luma = luminance(real(x, y));
      diff_sum(x / win, y / win) += std::abs(luminance(cg.color(x, y)) - real_luma);
      luma_sum(x / win, y / win) += real_luma;
      ++count(x / win, y / win);
    }
  }
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (count[i] == 0) continue;
    grid.covered[i] = 1;
    grid.values[i] = (diff_sum[i] / count[i]) / (luma_sum[i] / count[i] + cfg.epsilon_d);
  }
  return grid;
}

WindowGrid LinearSalienceModel::contrast(const RgbImage& real, const CgLayer& cg,
                                         const BlendConfig& cfg) const {
  return local_salience(real, cg, cfg);
}

double LinearSalienceModel::opacity(double target_visibility, double contrast,
                                    const BlendConfig& cfg) const {
  return std::clamp(cfg.kappa * target_visibility / std::max(contrast, cfg.epsilon_d), 0.0, 1.0);
}

BlendResult alpha_blend(const SphericalFrame& real, const CgLayer& cg, const ProbabilityMap& prob) {
  require_aligned(real, cg);
  if (!prob.same_shape(cg.color)) throw std::invalid_argument("alpha_blend: dimension mismatch");
  BlendResult result{real, ScalarImage(real.width(), real.height(), 0.0)};
  RgbImage out = real.pixels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!cg.covers(i)) continue;
    const double p = prob[i];
    const Rgb& r = real.pixels()[i];
    const Rgba& c = cg.color[i];
    out[i] = {clamp01(r.r * p + c.r * (1.0 - p)), clamp01(r.g * p + c.g * (1.0 - p)),
              clamp01(r.b * p + c.b * (1.0 - p))};
    result.alpha[i] = 1.0 - p;
  }
  result.composite = SphericalFrame(std::move(out), real.timestamp_index());
  return result;
}

BlendResult visibility_blend(const SphericalFrame& real, const CgLayer& cg,
                             const VisibilityField& vis, const BlendConfig& cfg,
                             const VisibilityModel& model) {
  return windowed_blend(real, cg, vis.v_cg, cfg, model);
}

BlendResult fixed_transparency_blend(const SphericalFrame& real, const CgLayer& cg,
                                     const CategoryMap& categories, const ProbabilityMap& prob,
                                     const FixedVisibilityParams& params, double sigma,
                                     const BlendConfig& cfg, const VisibilityModel& model) {
  const VisibilityField vis = fixed_visibility_field(categories, prob, params, sigma);
  return windowed_blend(real, cg, vis.v_cg, cfg, model);
}

}  // namespace omniocc
