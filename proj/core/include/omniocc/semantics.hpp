#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "omniocc/depth.hpp"
#include "omniocc/image.hpp"

namespace omniocc {

/// Segmenter output classes. The numeric value is the label code stored in
/// label images.
enum class SemanticClass : std::uint8_t {
  building = 0,
  grass = 1,
  car = 2,
  ground = 3,
  road = 4,
  sky = 5,
  tree = 6,
  tree_trunk = 7,
  unknown = 8,
};

inline constexpr int kSemanticClassCount = 9;

enum class Category : std::uint8_t { background = 0, simple = 1, complex = 2 };

inline constexpr int kCategoryCount = 3;

std::string_view to_string(SemanticClass c);
std::string_view to_string(Category c);
std::optional<SemanticClass> semantic_class_from_string(std::string_view name);
std::optional<Category> category_from_string(std::string_view name);

/// Background <- {grass, ground, road, sky, unknown}
/// Simple     <- {building, car, tree_trunk}
/// Complex    <- {tree}
Category category_of(SemanticClass c);

/// Uncertainties are kept inside (epsilon, 1 - epsilon).
inline constexpr double kUncertaintyEpsilon = 1e-4;
double clamp_uncertainty(double g);

struct SemanticMap {
  SemanticMap() = default;
  /// Uncertainties are clamped on construction.
  SemanticMap(Image<std::uint8_t> labels, ScalarImage uncertainty);

  int width() const { return labels.width(); }
  int height() const { return labels.height(); }

  Image<std::uint8_t> labels;
  ScalarImage uncertainty;
};

struct CategoryMap {
  Image<Category> categories;
  /// Pixels whose label code was outside the known classes (mapped to Unknown).
  std::size_t unknown_label_count = 0;
};

CategoryMap group_categories(const SemanticMap& sem);

/// Per-category visibility levels: maximum (1) and fallback minimum (2) for
/// the real scene in the foreground (f) and background (b).
struct VisibilityLevels {
  double v_f1 = 0.0;
  double v_f2 = 0.0;
  double v_b1 = 0.0;
  double v_b2 = 0.0;
  bool operator==(const VisibilityLevels&) const = default;
};

struct VisibilityParams {
  std::array<VisibilityLevels, kCategoryCount> levels{};

  const VisibilityLevels& operator[](Category c) const { return levels[static_cast<int>(c)]; }
  VisibilityLevels& operator[](Category c) { return levels[static_cast<int>(c)]; }

  /// Throws ConfigError on negative or non-finite entries.
  void validate() const;
  /// Background 10/10/10/10, Simple 0.0005/0.001/5.0/4.0, Complex 1.5/1.0/4.0/2.5.
  static VisibilityParams defaults();
};

/// Fixed per-category V_f, V_b used by the fixed-transparency baseline.
struct FixedVisibility {
  double v_f = 0.0;
  double v_b = 0.0;
  bool operator==(const FixedVisibility&) const = default;
};

struct FixedVisibilityParams {
  std::array<FixedVisibility, kCategoryCount> levels{};

  const FixedVisibility& operator[](Category c) const { return levels[static_cast<int>(c)]; }
  FixedVisibility& operator[](Category c) { return levels[static_cast<int>(c)]; }

  void validate() const;
  /// Background 10/10, Simple 0.0005/5.0, Complex 1.5/4.0.
  static FixedVisibilityParams defaults();
};

/// Default sigma: 1 / (2 pi), which makes omega(0) = 1.
double default_sigma();

/// V_f = 1/2 V_f1 + 1/2 {(1 - g) V_f1 + g V_f2}, and V_b analogously.
/// The braced term is evaluated as V_1 + g (V_2 - V_1) so that equal levels
/// give back V_1 exactly for every g.
std::pair<double, double> visibility_from_uncertainty(Category category, double g,
                                                      const VisibilityParams& params);

/// omega = exp(-P_f^2 / (2 sigma)) / sqrt(2 pi sigma), clamped to [0, 1].
/// Throws ConfigError when sigma <= 0.
double probability_weight(double p_f, double sigma);

/// V_cg = (1 - omega) V_f + omega V_b, clamped to [min(V_f, V_b), max(V_f, V_b)].
double target_visibility(double v_f, double v_b, double omega);

struct VisibilityField {
  ScalarImage v_f;
  ScalarImage v_b;
  ScalarImage v_cg;
};

VisibilityField visibility_field(const SemanticMap& sem, const ProbabilityMap& prob,
                                 const VisibilityParams& params, double sigma);

/// Fixed-transparency variant: V_f and V_b come straight from the category table.
VisibilityField fixed_visibility_field(const CategoryMap& categories, const ProbabilityMap& prob,
                                       const FixedVisibilityParams& params, double sigma);

}  // namespace omniocc
