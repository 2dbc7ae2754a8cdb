// Primal-dual TV-L1 optical flow (duality-based scheme with Chambolle's
// projection for the TV part), coarse-to-fine with image warping.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "omniocc/errors.hpp"
#include "omniocc/flow.hpp"
#include "omniocc/parallel.hpp"

namespace omniocc {

namespace {

constexpr double kGradientFloor = 1e-10;

int wrap_index(int x, int width) {
  x %= width;
  return x < 0 ? x + width : x;
}

int clamp_index(int v, int n) { return std::clamp(v, 0, n - 1); }

int column(int x, int width, bool wrap) {
  return wrap ? wrap_index(x, width) : clamp_index(x, width);
}

bool is_constant(const ScalarImage& image) {
  if (image.empty()) return true;
  const double first = image[0];
  return std::all_of(image.pixels().begin(), image.pixels().end(),
                     [first](double v) { return v == first; });
}

ScalarImage gaussian_blur(const ScalarImage& src, double sigma, bool wrap) {
  if (sigma <= 0.0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = src.width();
  const int h = src.height();
  ScalarImage tmp(w, h);
  ScalarImage out(w, h);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src(column(x + i, w, wrap), y);
      tmp(x, y) = acc;
    }
  });
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(x, clamp_index(y + i, h));
      out(x, y) = acc;
    }
  });
  return out;
}

ScalarImage resample(const ScalarImage& src, int width, int height, bool wrap) {
  ScalarImage out(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  parallel_rows(height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      out(x, y) = sample_bilinear(src, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, wrap);
    }
  });
  return out;
}

ScalarImage downsample(const ScalarImage& src, int width, int height, double scale, bool wrap) {
  const double sigma = 0.6 * std::sqrt(1.0 / (scale * scale) - 1.0);
  return resample(gaussian_blur(src, sigma, wrap), width, height, wrap);
}

struct LevelDims {
  int width;
  int height;
};

std::vector<LevelDims> pyramid_dims(int width, int height, const FlowParams& params) {
  std::vector<LevelDims> dims{{width, height}};
  while (static_cast<int>(dims.size()) < params.levels) {
    const int w = static_cast<int>(dims.back().width * params.pyramid_scale + 0.5);
    const int h = static_cast<int>(dims.back().height * params.pyramid_scale + 0.5);
    if (std::min(w, h) < params.min_level_size) break;
    dims.push_back({w, h});
  }
  return dims;
}

// Central differences; rows use one-sided differences at the borders.
void gradient(const ScalarImage& img, bool wrap, ScalarImage& gx, ScalarImage& gy) {
  const int w = img.width();
  const int h = img.height();
  gx = ScalarImage(w, h);
  gy = ScalarImage(w, h);
  parallel_rows(h, [&](int y) {
    const int ym = clamp_index(y - 1, h);
    const int yp = clamp_index(y + 1, h);
    const double dy = std::max(1, yp - ym);
    for (int x = 0; x < w; ++x) {
      int xm = column(x - 1, w, wrap);
      int xp = column(x + 1, w, wrap);
      double dx = 2.0;
      if (!wrap) dx = std::max(1, xp - xm);
      gx(x, y) = w > 1 ? (img(xp, y) - img(xm, y)) / dx : 0.0;
      gy(x, y) = h > 1 ? (img(x, yp) - img(x, ym)) / dy : 0.0;
    }
  });
}

ScalarImage median3x3(const ScalarImage& src, bool wrap) {
  const int w = src.width();
  const int h = src.height();
  ScalarImage out(w, h);
  parallel_rows(h, [&](int y) {
    std::array<double, 9> window{};
    for (int x = 0; x < w; ++x) {
      int k = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          window[k++] = src(column(x + dx, w, wrap), clamp_index(y + dy, h));
        }
      }
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out(x, y) = window[4];
    }
  });
  return out;
}

// Solves one pyramid level in place on (u1, u2).
void solve_level(const ScalarImage& i0, const ScalarImage& i1, ScalarImage& u1, ScalarImage& u2,
                 const FlowParams& params) {
  const int w = i0.width();
  const int h = i0.height();
  const bool wrap = params.wrap_horizontal;
  const double lt = params.lambda * params.theta;
  const double taut = params.tau / params.theta;

  ScalarImage i1x, i1y;
  gradient(i1, wrap, i1x, i1y);

  ScalarImage p11(w, h), p12(w, h), p21(w, h), p22(w, h);
  ScalarImage wx(w, h), wy(w, h), grad(w, h), rho_c(w, h);

  for (int warp = 0; warp < params.warps_per_level; ++warp) {
    parallel_rows(h, [&](int y) {
      for (int x = 0; x < w; ++x) {
        const double px = x + u1(x, y);
        const double py = y + u2(x, y);
        const double iw = sample_bilinear(i1, px, py, wrap);
        const double gxw = sample_bilinear(i1x, px, py, wrap);
        const double gyw = sample_bilinear(i1y, px, py, wrap);
        wx(x, y) = gxw;
        wy(x, y) = gyw;
        grad(x, y) = gxw * gxw + gyw * gyw;
        rho_c(x, y) = iw - gxw * u1(x, y) - gyw * u2(x, y) - i0(x, y);
      }
    });

    const int iterations = params.iterations_for_warp(warp);
    for (int it = 0; it < iterations; ++it) {
      // Data-term thresholding followed by u = v + theta * div p. Both only
      // read u at the pixel being written, so one pass suffices.
      parallel_rows(h, [&](int y) {
        const double* gx = &wx(0, y);
        const double* gy = &wy(0, y);
        const double* g2 = &grad(0, y);
        const double* rc = &rho_c(0, y);
        const double* a11 = &p11(0, y);
        const double* a21 = &p21(0, y);
        const double* a12 = &p12(0, y);
        const double* a22 = &p22(0, y);
        const double* a12_up = y > 0 ? &p12(0, y - 1) : nullptr;
        const double* a22_up = y > 0 ? &p22(0, y - 1) : nullptr;
        const bool has_down = y < h - 1;
        double* r1 = &u1(0, y);
        double* r2 = &u2(0, y);
        for (int x = 0; x < w; ++x) {
          const double g = g2[x];
          const double rho = rc[x] + gx[x] * r1[x] + gy[x] * r2[x];
          double d1 = 0.0;
          double d2 = 0.0;
          if (rho < -lt * g) {
            d1 = lt * gx[x];
            d2 = lt * gy[x];
          } else if (rho > lt * g) {
            d1 = -lt * gx[x];
            d2 = -lt * gy[x];
          } else if (g > kGradientFloor) {
            const double f = -rho / g;
            d1 = f * gx[x];
            d2 = f * gy[x];
          }
          double div1, div2;
          if (x > 0) {
            div1 = (wrap || x < w - 1 ? a11[x] : 0.0) - a11[x - 1];
            div2 = (wrap || x < w - 1 ? a21[x] : 0.0) - a21[x - 1];
          } else if (wrap) {
            div1 = a11[0] - a11[w - 1];
            div2 = a21[0] - a21[w - 1];
          } else {
            div1 = w > 1 ? a11[0] : 0.0;
            div2 = w > 1 ? a21[0] : 0.0;
          }
          div1 += (has_down ? a12[x] : 0.0) - (a12_up ? a12_up[x] : 0.0);
          div2 += (has_down ? a22[x] : 0.0) - (a22_up ? a22_up[x] : 0.0);
          r1[x] = r1[x] + d1 + params.theta * div1;
          r2[x] = r2[x] + d2 + params.theta * div2;
        }
      });

      // Dual update with forward differences of u.
      parallel_rows(h, [&](int y) {
        const double* r1 = &u1(0, y);
        const double* r2 = &u2(0, y);
        const double* d1 = y < h - 1 ? &u1(0, y + 1) : nullptr;
        const double* d2 = y < h - 1 ? &u2(0, y + 1) : nullptr;
        double* a11 = &p11(0, y);
        double* a12 = &p12(0, y);
        double* a21 = &p21(0, y);
        double* a22 = &p22(0, y);
        for (int x = 0; x < w; ++x) {
          double u1x = 0.0, u2x = 0.0;
          if (x < w - 1) {
            u1x = r1[x + 1] - r1[x];
            u2x = r2[x + 1] - r2[x];
          } else if (wrap) {
            u1x = r1[0] - r1[x];
            u2x = r2[0] - r2[x];
          }
          const double u1y = d1 ? d1[x] - r1[x] : 0.0;
          const double u2y = d2 ? d2[x] - r2[x] : 0.0;
          const double ng1 = 1.0 + taut * std::sqrt(u1x * u1x + u1y * u1y);
          const double ng2 = 1.0 + taut * std::sqrt(u2x * u2x + u2y * u2y);
          a11[x] = (a11[x] + taut * u1x) / ng1;
          a12[x] = (a12[x] + taut * u1y) / ng1;
          a21[x] = (a21[x] + taut * u2x) / ng2;
          a22[x] = (a22[x] + taut * u2y) / ng2;
        }
      });
    }

    if (params.median_filter) {
      u1 = median3x3(u1, wrap);
      u2 = median3x3(u2, wrap);
    }
  }
}

double tv_term(const FlowField& flow, bool wrap) {
  const int w = flow.width();
  const int h = flow.height();
  double total = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Eigen::Vector2d dx = Eigen::Vector2d::Zero();
      Eigen::Vector2d dy = Eigen::Vector2d::Zero();
      if (wrap || x < w - 1) dx = flow.u(wrap_index(x + 1, w), y) - flow.u(x, y);
      if (y < h - 1) dy = flow.u(x, y + 1) - flow.u(x, y);
      total += std::hypot(dx.x(), dy.x()) + std::hypot(dx.y(), dy.y());
    }
  }
  return total;
}

}  // namespace

void FlowField::sanitize() {
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!u[i].allFinite()) {
      u[i].setZero();
      valid[i] = 0;
    }
  }
}

void FlowField::quantize_to_float() {
  for (auto& v : u.pixels()) {
    v = Eigen::Vector2d(static_cast<float>(v.x()), static_cast<float>(v.y()));
  }
}

void FlowParams::validate() const {
  if (!(lambda > 0.0) || !(theta > 0.0) || !(tau > 0.0)) {
    throw ConfigError("flow: lambda, theta and tau must be positive");
  }
  if (iterations <= 0 || warps_per_level <= 0 || levels < 1 || min_level_size < 1) {
    throw ConfigError("flow: iterations, warps_per_level, levels and min_level_size must be >= 1");
  }
  if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0)) {
    throw ConfigError("flow: pyramid_scale must lie in (0, 1)");
  }
}

int FlowParams::iterations_for_warp(int warp) const {
  const int base = iterations / warps_per_level;
  const int extra = iterations % warps_per_level;
  return base + (warp < extra ? 1 : 0);
}

double sample_bilinear(const ScalarImage& image, double x, double y, bool wrap_horizontal) {
  const int w = image.width();
  const int h = image.height();
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  if (!wrap_horizontal) x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double a = x - fx;
  const double b = y - fy;
  const int x0 = column(static_cast<int>(fx), w, wrap_horizontal);
  const int x1 = column(static_cast<int>(fx) + 1, w, wrap_horizontal);
  const int y0 = static_cast<int>(fy);
  const int y1 = std::min(y0 + 1, h - 1);
  return (1.0 - b) * ((1.0 - a) * image(x0, y0) + a * image(x1, y0)) +
         b * ((1.0 - a) * image(x0, y1) + a * image(x1, y1));
}

FlowField compute_flow(const ScalarImage& reference, const ScalarImage& target,
                       const FlowParams& params) {
  params.validate();
  if (!reference.same_shape(target)) {
    throw std::invalid_argument("compute_flow: image dimensions differ");
  }
  const int width = reference.width();
  const int height = reference.height();
  FlowField flow(width, height);
  if (reference.empty() || (is_constant(reference) && is_constant(target))) return flow;

  const auto dims = pyramid_dims(width, height, params);
  const bool wrap = params.wrap_horizontal;
  std::vector<ScalarImage> pyr0{reference};
  std::vector<ScalarImage> pyr1{target};
  for (std::size_t l = 1; l < dims.size(); ++l) {
    pyr0.push_back(downsample(pyr0.back(), dims[l].width, dims[l].height, params.pyramid_scale, wrap));
    pyr1.push_back(downsample(pyr1.back(), dims[l].width, dims[l].height, params.pyramid_scale, wrap));
  }

  ScalarImage u1(dims.back().width, dims.back().height);
  ScalarImage u2(dims.back().width, dims.back().height);
  for (int l = static_cast<int>(dims.size()) - 1; l >= 0; --l) {
    solve_level(pyr0[l], pyr1[l], u1, u2, params);
    if (l > 0) {
      const auto& fine = dims[l - 1];
      const double sx = static_cast<double>(fine.width) / dims[l].width;
      const double sy = static_cast<double>(fine.height) / dims[l].height;
      u1 = resample(u1, fine.width, fine.height, wrap);
      u2 = resample(u2, fine.width, fine.height, wrap);
      for (auto& v : u1.pixels()) v *= sx;
      for (auto& v : u2.pixels()) v *= sy;
    }
  }

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) flow.u(x, y) = {u1(x, y), u2(x, y)};
  }
  flow.sanitize();
  return flow;
}

double tvl1_energy(const ScalarImage& reference, const ScalarImage& target, const FlowField& flow,
                   double lambda) {
  if (!reference.same_shape(target) || !reference.same_shape(flow.u)) {
    throw std::invalid_argument("tvl1_energy: dimension mismatch");
  }
  double data = 0.0;
  for (int y = 0; y < reference.height(); ++y) {
    for (int x = 0; x < reference.width(); ++x) {
      const auto& u = flow.u(x, y);
      data += std::abs(sample_bilinear(target, x + u.x(), y + u.y(), true) - reference(x, y));
    }
  }
  return tv_term(flow, true) + lambda * data;
}

MaskedField warp_scalar_field(const MaskedField& field, const FlowField& flow) {
  if (!field.values.same_shape(flow.u)) {
    throw std::invalid_argument("warp_scalar_field: dimension mismatch");
  }
  const int w = field.width();
  const int h = field.height();
  MaskedField out(w, h);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (!flow.is_valid(x, y)) continue;
      const double sx = x + flow.u(x, y).x();
      const double sy = y + flow.u(x, y).y();
      if (!(sy >= 0.0 && sy <= h - 1) || !std::isfinite(sx)) continue;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double a = sx - fx;
      const double b = sy - fy;
      const int x0 = wrap_index(static_cast<int>(fx), w);
      const int y0 = static_cast<int>(fy);
      const std::array<int, 4> xs{x0, wrap_index(x0 + 1, w), x0, wrap_index(x0 + 1, w)};
      const std::array<int, 4> ys{y0, y0, y0 + 1, y0 + 1};
      const std::array<double, 4> weights{(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b};
      double value = 0.0;
      bool ok = true;
      for (int k = 0; k < 4 && ok; ++k) {
        if (weights[k] == 0.0) continue;
        if (ys[k] >= h || !field.is_valid(xs[k], ys[k])) {
          ok = false;
        } else {
          value += weights[k] * field.values(xs[k], ys[k]);
        }
      }
      if (ok) {
        out.values(x, y) = value;
        out.valid(x, y) = 1;
      }
    }
  });
  return out;
}

}  // namespace omniocc
