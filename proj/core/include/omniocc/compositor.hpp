#pragma once

#include <memory>
#include <optional>
#include <string_view>

#include "omniocc/depth.hpp"
#include "omniocc/image.hpp"
#include "omniocc/semantics.hpp"
#include "omniocc/sphere_geometry.hpp"

namespace omniocc {

/// Externally rendered virtual content aligned with the real frame. The alpha
/// channel is the coverage mask; depth must be valid wherever alpha > 0.
struct CgLayer {
  RgbaImage color;
  DepthMap depth;

  int width() const { return color.width(); }
  int height() const { return color.height(); }
  bool covers(int x, int y) const { return color(x, y).a > 0.0; }
  bool covers(std::size_t i) const { return color[i].a > 0.0; }
  /// Throws DataError if depth is invalid somewhere inside the mask.
  void validate() const;
};

enum class BlendMode { visibility, alpha, fixed_transparency };

std::string_view to_string(BlendMode mode);
std::optional<BlendMode> blend_mode_from_string(std::string_view name);

struct BlendConfig {
  /// Square window side in pixels.
  int window = 32;
  /// Visibility-to-contrast calibration.
  double kappa = 0.2;
  /// Contrast floor.
  double epsilon_d = 0.01;
  BlendMode mode = BlendMode::visibility;

  /// Throws ConfigError unless window >= 4, kappa > 0 and epsilon_d > 0.
  void validate() const;
};

/// Per-window scalars over a grid of window x window tiles (the last row and
/// column of tiles may be partial).
struct WindowGrid {
  int window = 0;
  ScalarImage values;
  Mask covered;

  int cols() const { return values.width(); }
  int rows() const { return values.height(); }
};

/// Contrast-based visibility predictor. Maps window statistics to the
/// opacity that reaches a target visibility. Implementations must be
/// monotone non-decreasing in the target.
class VisibilityModel {
 public:
  virtual ~VisibilityModel() = default;
  virtual WindowGrid contrast(const RgbImage& real, const CgLayer& cg,
                              const BlendConfig& cfg) const = 0;
  virtual double opacity(double target_visibility, double contrast,
                         const BlendConfig& cfg) const = 0;
};

/// Linear salience surrogate: predicted visibility of the CG at opacity a is
/// a * D_W / kappa, hence a_W = clamp(kappa * V / max(D_W, epsilon_d), 0, 1).
class LinearSalienceModel final : public VisibilityModel {
 public:
  WindowGrid contrast(const RgbImage& real, const CgLayer& cg, const BlendConfig& cfg) const override;
  double opacity(double target_visibility, double contrast, const BlendConfig& cfg) const override;
};

/// D_W = mean |L_cg - L_real| / (mean L_real + epsilon_d) over the covered
/// pixels of each window; 0 for windows without coverage.
WindowGrid local_salience(const RgbImage& real, const CgLayer& cg, const BlendConfig& cfg);

struct BlendResult {
  SphericalFrame composite;
  /// Per-pixel CG opacity; 0 outside the mask.
  ScalarImage alpha;
};

/// RGB = Real * P_f + Cg * (1 - P_f) inside the mask; real elsewhere.
BlendResult alpha_blend(const SphericalFrame& real, const CgLayer& cg, const ProbabilityMap& prob);

/// Windowed visibility-based blending driven by a per-pixel target V_cg.
BlendResult visibility_blend(const SphericalFrame& real, const CgLayer& cg,
                             const VisibilityField& vis, const BlendConfig& cfg,
                             const VisibilityModel& model = LinearSalienceModel{});

/// Baseline with per-category fixed V_f, V_b (uncertainty is ignored).
BlendResult fixed_transparency_blend(const SphericalFrame& real, const CgLayer& cg,
                                     const CategoryMap& categories, const ProbabilityMap& prob,
                                     const FixedVisibilityParams& params, double sigma,
                                     const BlendConfig& cfg,
                                     const VisibilityModel& model = LinearSalienceModel{});

}  // namespace omniocc
