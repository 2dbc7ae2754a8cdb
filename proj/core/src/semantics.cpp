#include "omniocc/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "omniocc/errors.hpp"

namespace omniocc {

namespace {

constexpr std::array<std::string_view, kSemanticClassCount> kClassNames{
    "Building", "Grass", "Car", "Ground", "Road", "Sky", "Tree", "TreeTrunk", "Unknown"};

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames{"Background", "Simple",
                                                                      "Complex"};

constexpr std::array<Category, kSemanticClassCount> kGrouping{
    Category::simple,      // Building
    Category::background,  // Grass
    Category::simple,      // Car
    Category::background,  // Ground
    Category::background,  // Road
    Category::background,  // Sky
    Category::complex,     // Tree
    Category::simple,      // TreeTrunk
    Category::background,  // Unknown
};

bool all_finite_nonnegative(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0; });
}

}  // namespace

std::string_view to_string(SemanticClass c) { return kClassNames[static_cast<int>(c)]; }
std::string_view to_string(Category c) { return kCategoryNames[static_cast<int>(c)]; }

std::optional<SemanticClass> semantic_class_from_string(std::string_view name) {
  for (int i = 0; i < kSemanticClassCount; ++i) {
    if (kClassNames[i] == name) return static_cast<SemanticClass>(i);
  }
  return std::nullopt;
}

std::optional<Category> category_from_string(std::string_view name) {
  for (int i = 0; i < kCategoryCount; ++i) {
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  }
  return std::nullopt;
}

Category category_of(SemanticClass c) { return kGrouping[static_cast<int>(c)]; }

double clamp_uncertainty(double g) {
  if (std::isnan(g)) return 0.5;
  return std::clamp(g, kUncertaintyEpsilon, 1.0 - kUncertaintyEpsilon);
}

SemanticMap::SemanticMap(Image<std::uint8_t> label_image, ScalarImage uncertainty_image)
    : labels(std::move(label_image)), uncertainty(std::move(uncertainty_image)) {
  if (!labels.same_shape(uncertainty)) {
    throw std::invalid_argument("SemanticMap: label and uncertainty dimensions differ");
  }
  for (auto& g : uncertainty.pixels()) g = clamp_uncertainty(g);
}

CategoryMap group_categories(const SemanticMap& sem) {
  CategoryMap out{Image<Category>(sem.width(), sem.height(), Category::background), 0};
  for (std::size_t i = 0; i < sem.labels.size(); ++i) {
    const std::uint8_t code = sem.labels[i];
    if (code >= kSemanticClassCount) {
      ++out.unknown_label_count;
      out.categories[i] = category_of(SemanticClass::unknown);
    } else {
      out.categories[i] = category_of(static_cast<SemanticClass>(code));
    }
  }
  return out;
}

void VisibilityParams::validate() const {
  for (const auto& l : levels) {
    if (!all_finite_nonnegative({l.v_f1, l.v_f2, l.v_b1, l.v_b2})) {
      throw ConfigError("visibility levels must be finite and non-negative");
    }
  }
}

VisibilityParams VisibilityParams::defaults() {
  VisibilityParams p;
  p[Category::background] = {10.0, 10.0, 10.0, 10.0};
  p[Category::simple] = {0.0005, 0.001, 5.0, 4.0};
  p[Category::complex] = {1.5, 1.0, 4.0, 2.5};
  return p;
}

void FixedVisibilityParams::validate() const {
  for (const auto& l : levels) {
    if (!all_finite_nonnegative({l.v_f, l.v_b})) {
      throw ConfigError("fixed visibility levels must be finite and non-negative");
    }
  }
}

FixedVisibilityParams FixedVisibilityParams::defaults() {
  FixedVisibilityParams p;
  p[Category::background] = {10.0, 10.0};
  p[Category::simple] = {0.0005, 5.0};
  p[Category::complex] = {1.5, 4.0};
  return p;
}

double default_sigma() { return 1.0 / (2.0 * std::numbers::pi); }

std::pair<double, double> visibility_from_uncertainty(Category category, double g,
                                                      const VisibilityParams& params) {
  const auto& l = params[category];
  const double v_f = 0.5 * l.v_f1 + 0.5 * (l.v_f1 + g * (l.v_f2 - l.v_f1));
  const double v_b = 0.5 * l.v_b1 + 0.5 * (l.v_b1 + g * (l.v_b2 - l.v_b1));
  return {v_f, v_b};
}

double probability_weight(double p_f, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
  const double omega =
      std::exp(-(p_f * p_f) / (2.0 * sigma)) / std::sqrt(2.0 * std::numbers::pi * sigma);
  return std::clamp(omega, 0.0, 1.0);
}

double target_visibility(double v_f, double v_b, double omega) {
  const double v = (1.0 - omega) * v_f + omega * v_b;
  return std::clamp(v, std::min(v_f, v_b), std::max(v_f, v_b));
}

VisibilityField visibility_field(const SemanticMap& sem, const ProbabilityMap& prob,
                                 const VisibilityParams& params, double sigma) {
  if (!sem.labels.same_shape(prob)) {
    throw std::invalid_argument("visibility_field: dimension mismatch");
  }
  const CategoryMap categories = group_categories(sem);
  const int w = sem.width();
  const int h = sem.height();
  VisibilityField out{ScalarImage(w, h), ScalarImage(w, h), ScalarImage(w, h)};
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const auto [v_f, v_b] =
        visibility_from_uncertainty(categories.categories[i], sem.uncertainty[i], params);
    out.v_f[i] = v_f;
    out.v_b[i] = v_b;
    out.v_cg[i] = target_visibility(v_f, v_b, probability_weight(prob[i], sigma));
  }
  return out;
}

VisibilityField fixed_visibility_field(const CategoryMap& categories, const ProbabilityMap& prob,
                                       const FixedVisibilityParams& params, double sigma) {
  if (!categories.categories.same_shape(prob)) {
    throw std::invalid_argument("fixed_visibility_field: dimension mismatch");
  }
  const int w = prob.width();
  const int h = prob.height();
  VisibilityField out{ScalarImage(w, h), ScalarImage(w, h), ScalarImage(w, h)};
  for (std::size_t i = 0; i < prob.size(); ++i) {
    const auto& l = params[categories.categories[i]];
    out.v_f[i] = l.v_f;
    out.v_b[i] = l.v_b;
    out.v_cg[i] = target_visibility(l.v_f, l.v_b, probability_weight(prob[i], sigma));
  }
  return out;
}

}  // namespace omniocc
