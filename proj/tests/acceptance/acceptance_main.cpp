// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "omniocc/compositor.hpp"
#include "omniocc/depth.hpp"
#include "omniocc/flow.hpp"
#include "omniocc/io.hpp"
#include "omniocc/parallel.hpp"
#include "omniocc/pipeline.hpp"
#include "omniocc/semantics.hpp"
#include "omniocc/synth.hpp"
#include "test_support.hpp"

namespace {

using namespace omniocc;
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const Outcome& o) {
  std::printf("%s  %d  %s: %s\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str());
  std::fflush(stdout);
  failures += o.pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// Shared state for criteria 1, 7 and 8: one pipeline run on the street dataset.
struct StreetRun {
  testing::TempDir dir{"omniocc_acceptance"};
  synth::SceneSpec spec;
  EvalReport report;
  double seconds = 0.0;
  // Per frame: real depth (ground truth), CG layer, labels, visibility alpha.
  struct Frame {
    DepthMap gt_depth;
    CgLayer cg;
    Image<std::uint8_t> labels;
    ScalarImage alpha;
  };
  std::vector<Frame> frames;
};

Outcome criterion_1(StreetRun& run) {
  const FrameDims dims = run.spec.dims;
  // Exact flow: every frame, analytic depth vs triangulation from the true FOE.
  double worst = 0.0;
  std::size_t scored = 0;
  for (int t = 1; t < static_cast<int>(run.spec.camera_path.size()); ++t) {
    const auto& prev = run.spec.camera_path[t - 1];
    const auto& curr = run.spec.camera_path[t];
    const AngularPoint foe = motion_direction(prev, curr);
    const auto est = triangulate_depth_backward(synth::ground_truth_flow(run.spec, t, t - 1), dims, prev, curr, foe);
    const DepthMap& truth = run.frames[t].gt_depth;
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        if (!est.depth.is_valid(x, y) || !truth.is_valid(x, y)) continue;
        const double a = parallax_angle(pixel_center(x, y), foe, dims);
        if (a <= 5 * kDeg || a >= kPi - 5 * kDeg) continue;
        worst = std::max(worst, std::abs(est.depth.values(x, y) / truth.values(x, y) - 1.0));
        ++scored;
      }
    }
  }
  // Solver flow: per-frame median relative error of the triangulated depth.
  double worst_median = 0.0;
  std::size_t frames_scored = 0;
  bool all_ok = true;
  for (const auto& f : run.report.frames) {
    all_ok = all_ok && f.ok;
    if (!f.raw_depth_error || f.raw_depth_error->count == 0) continue;
    worst_median = std::max(worst_median, f.raw_depth_error->median_relative);
    ++frames_scored;
  }
  Outcome o;
  o.pass = all_ok && scored > 0 && worst < 1e-6 && frames_scored + 1 == run.report.frames.size() &&
           worst_median < 0.10 && run.seconds < 60.0;
  o.detail = fmt("exact flow max rel err %.2e over %zu px (< 1e-6); TV-L1 worst per-frame median "
                 "%.2f%% over %zu frames (< 10%%); %zu frames %dx%d in %.1f s (< 60 s)",
                 worst, scored, 100.0 * worst_median, frames_scored, run.report.frames.size(),
                 dims.width, dims.height, run.seconds);
  return o;
}

Outcome criterion_2() {
  auto one = [](double v) {
    DepthMap d(1, 1);
    d.values(0, 0) = v;
    d.valid(0, 0) = 1;
    return d;
  };
  bool half = true;
  for (double d : {0.5, 1.0, 3.0, 17.0, 250.0}) half = half && foreground_probability(one(d), one(d))[0] == 0.5;
  const int n = 100;
  DepthMap real(n, n), cg(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      real.values(j, i) = 0.5 + 0.1 * i;
      cg.values(j, i) = 0.5 + 0.1 * j;
    }
  }
  real.valid.fill(1);
  cg.valid.fill(1);
  const ProbabilityMap p = foreground_probability(real, cg);
  bool mono = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j + 1 < n; ++j) {
      mono = mono && p(j, i) < p(j + 1, i) && p(i, j) > p(i, j + 1);
    }
  }
  const double q = foreground_probability(one(1.0), one(1.0 + std::log(3.0)))[0];
  Outcome o;
  o.pass = half && mono && std::abs(q - 0.75) < 1e-12;
  o.detail = fmt("P_f(d,d)=0.5 %s; strict monotonicity on 100x100 grid %s; P_f(1,1+ln3)-0.75 = %.1e",
                 half ? "exact" : "VIOLATED", mono ? "holds" : "VIOLATED", q - 0.75);
  return o;
}

Outcome criterion_3() {
  const auto p = VisibilityParams::defaults();
  bool endpoints = true;
  for (int c = 0; c < kCategoryCount; ++c) {
    const auto cat = static_cast<Category>(c);
    endpoints = endpoints && visibility_from_uncertainty(cat, 0.0, p).first == p[cat].v_f1;
    endpoints = endpoints &&
                std::abs(visibility_from_uncertainty(cat, 1.0, p).first - 0.5 * (p[cat].v_f1 + p[cat].v_f2)) < 1e-15;
  }
  const double w0 = probability_weight(0.0, 1.0 / (2.0 * kPi));
  const double vf = visibility_from_uncertainty(Category::simple, 0.5, p).first;
  Outcome o;
  o.pass = endpoints && std::abs(w0 - 1.0) < 1e-15 && std::abs(vf - 0.000625) < 1e-12;
  o.detail = fmt("g=0 and g=1 endpoints %s; omega(0)-1 = %.1e; Simple V_f(0.5) = %.9f (|err| %.1e)",
                 endpoints ? "exact" : "VIOLATED", w0 - 1.0, vf, std::abs(vf - 0.000625));
  return o;
}

Outcome criterion_4() {
  const FrameDims dims{256, 128};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(0.0, dims.width);
  std::uniform_real_distribution<double> uy(30.0, dims.height - 30.0);
  std::uniform_real_distribution<double> off(-0.5, 0.5);
  std::normal_distribution<double> noise(0.0, 0.1);
  const double half = 10 * kDeg;
  const double px_per_rad = dims.width / (2 * kPi);
  auto distance = [&](const AngularPoint& a, const Eigen::Vector2d& c) {
    const Eigen::Vector2d q = angles_to_pixel(a, dims);
    double dx = std::abs(q.x() - c.x());
    dx = std::min(dx, dims.width - dx);
    return std::hypot(dx, q.y() - c.y());
  };
  double worst_clean = 0.0, worst_noisy = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector2d c(ux(rng), uy(rng));
    const Eigen::Vector2d rc = c + Eigen::Vector2d(off(rng), off(rng)) * half * px_per_rad;
    const DivergenceSearchRegion region{pixel_to_angles({wrap_column(rc.x(), dims.width), rc.y()}, dims), half, half};
    FlowField f(dims.width, dims.height);
    for (int y = 0; y < dims.height; ++y) {
      for (int x = 0; x < dims.width; ++x) {
        Eigen::Vector2d d = pixel_center(x, y) - c;
        if (d.x() > dims.width / 2.0) d.x() -= dims.width;
        if (d.x() < -dims.width / 2.0) d.x() += dims.width;
        f.u(x, y) = 0.05 * d;
      }
    }
    worst_clean = std::max(worst_clean, distance(find_divergence_point(f, dims, region).point, c));
    for (auto& v : f.u.pixels()) v += v.norm() * Eigen::Vector2d(noise(rng), noise(rng));
    worst_noisy = std::max(worst_noisy, distance(find_divergence_point(f, dims, region).point, c));
  }
  Outcome o;
  o.pass = worst_clean < 1.0 && worst_noisy < 3.0;
  o.detail = fmt("20 random FOE placements: worst error %.3f px noiseless (< 1), %.3f px with 10%% noise (< 3)",
                 worst_clean, worst_noisy);
  return o;
}

Outcome criterion_5() {
  const FlowParams params;
  const std::vector<std::pair<int, int>> shifts{{3, 0}, {-2, 0}, {0, 2}, {2, -1}, {-1, -3}};
  double worst_epe = 0.0;
  bool energy_ok = true;
  bool deterministic = true;
  const int saved_threads = thread_count();
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    const auto [dx, dy] = shifts[i];
    const ScalarImage ref = testing::textured_image(256, 128, 100 + i);
    const ScalarImage tgt = testing::shifted(ref, dx, dy);
    set_thread_count(1);
    const FlowField f = compute_flow(ref, tgt, params);
    // Rows whose shifted source is clamped have no exact answer.
    const int border = std::abs(dy) + 1;
    worst_epe = std::max(worst_epe, testing::mean_endpoint_error(f, {dx, dy}, border));
    energy_ok = energy_ok && tvl1_energy(ref, tgt, f, params.lambda) <=
                                 tvl1_energy(ref, tgt, FlowField(ref.width(), ref.height()), params.lambda);
    for (int threads : {1, 2, 4}) {
      set_thread_count(threads);
      const FlowField g = compute_flow(ref, tgt, params);
      for (std::size_t k = 0; k < f.u.size() && deterministic; ++k) {
        deterministic = f.u[k].x() == g.u[k].x() && f.u[k].y() == g.u[k].y() && f.valid[k] == g.valid[k];
      }
    }
  }
  set_thread_count(saved_threads);
  Outcome o;
  o.pass = worst_epe < 0.5 && energy_ok && deterministic;
  o.detail = fmt("%zu integer shifts: worst mean EPE %.3f px (< 0.5); energy <= zero-flow energy %s; "
                 "bit-identical across runs and 1/2/4 threads %s",
                 shifts.size(), worst_epe, energy_ok ? "on all pairs" : "VIOLATED",
                 deterministic ? "yes" : "NO");
  return o;
}

Outcome criterion_6() {
  const int w = 128, h = 64;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, kSemanticClassCount - 1);
  bool conserved = true;
  bool equivalent = true;
  std::size_t compared = 0;
  for (int trial = 0; trial < 10; ++trial) {
    RgbImage img(w, h);
    for (auto& p : img.pixels()) p = {u(rng), u(rng), u(rng)};
    const SphericalFrame real(img, trial);
    CgLayer cg{RgbaImage(w, h), DepthMap(w, h)};
    const double cx = u(rng) * w, cy = 16 + u(rng) * (h - 32), r = 6 + 14 * u(rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (std::hypot(x - cx, y - cy) > r) continue;
        cg.color(x, y) = {u(rng), u(rng), u(rng), 1.0};
        cg.depth.values(x, y) = 1.0 + 20.0 * u(rng);
        cg.depth.valid(x, y) = 1;
      }
    }
    Image<std::uint8_t> labels(w, h);
    ScalarImage unc(w, h);
    ProbabilityMap prob(w, h);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = static_cast<std::uint8_t>(cls(rng));
      unc[i] = u(rng);
      prob[i] = u(rng);
    }
    const SemanticMap sem(labels, unc);
    BlendConfig cfg;
    cfg.window = 8 + 8 * (trial % 3);
    const double sigma = default_sigma();
    const auto vis = visibility_blend(real, cg, visibility_field(sem, prob, VisibilityParams::defaults(), sigma), cfg);
    const auto alp = alpha_blend(real, cg, prob);
    const auto fix = fixed_transparency_blend(real, cg, group_categories(sem), prob,
                                              FixedVisibilityParams::defaults(), sigma, cfg);
    for (const auto* res : {&vis, &alp, &fix}) {
      for (std::size_t i = 0; i < img.size(); ++i) {
        if (cg.covers(i)) continue;
        conserved = conserved && res->composite.pixels()[i] == img[i];
        ++compared;
      }
    }
    VisibilityParams collapsed;
    FixedVisibilityParams fixed;
    for (int c = 0; c < kCategoryCount; ++c) {
      const double vf = 6 * u(rng), vb = 6 * u(rng);
      collapsed.levels[c] = {vf, vf, vb, vb};
      fixed.levels[c] = {vf, vb};
    }
    const auto a = visibility_blend(real, cg, visibility_field(sem, prob, collapsed, sigma), cfg);
    const auto b = fixed_transparency_blend(real, cg, group_categories(sem), prob, fixed, sigma, cfg);
    equivalent = equivalent && a.composite.pixels() == b.composite.pixels() && a.alpha == b.alpha;
  }
  Outcome o;
  o.pass = conserved && equivalent;
  o.detail = fmt("outside-mask pixels bit-identical in all three modes %s (%zu compared); "
                 "collapsed levels make visibility == fixed-transparency bit-exactly %s",
                 conserved ? "yes" : "NO", compared, equivalent ? "yes" : "NO");
  return o;
}

Outcome criterion_7(const StreetRun& run) {
  double simple_sum = 0.0, background_sum = 0.0;
  std::size_t simple_n = 0, background_n = 0;
  for (std::size_t t = 1; t < run.frames.size(); ++t) {
    const auto& f = run.frames[t];
    if (f.alpha.empty()) continue;
    for (std::size_t i = 0; i < f.alpha.size(); ++i) {
      if (!f.cg.covers(i)) continue;
      const double d_cg = f.cg.depth.values[i];
      const double d_real = f.gt_depth.valid[i] ? f.gt_depth.values[i] : std::numeric_limits<double>::infinity();
      const auto label = static_cast<SemanticClass>(f.labels[i]);
      const Category cat = f.labels[i] < kSemanticClassCount ? category_of(label) : Category::background;
      if (cat == Category::simple && d_real <= d_cg - 1.0) {
        simple_sum += f.alpha[i];
        ++simple_n;
      } else if (cat == Category::background && d_cg <= d_real - 1.0) {
        background_sum += f.alpha[i];
        ++background_n;
      }
    }
  }
  const double simple_mean = simple_n ? simple_sum / simple_n : 1.0;
  const double background_mean = background_n ? background_sum / background_n : 0.0;
  Outcome o;
  o.pass = simple_n > 0 && background_n > 0 && simple_mean < 0.1 && background_mean > 0.9;
  o.detail = fmt("visibility mode with TV-L1 depth: real nearer under Simple mean alpha %.4f over %zu px (< 0.1); "
                 "CG nearer under Background mean alpha %.4f over %zu px (> 0.9)",
                 simple_mean, simple_n, background_mean, background_n);
  return o;
}

Outcome criterion_8(const StreetRun& run) {
  std::map<std::string, double> sums;
  std::map<std::string, int> counts;
  for (const auto& f : run.report.frames) {
    for (const auto& t : f.timings) {
      sums[t.stage] += t.milliseconds;
      ++counts[t.stage];
    }
  }
  std::string detail = "not reproducible at desk scale (segmenter accuracy/latency, GPU flow rate, user study); "
                       "own timings, ms/frame:";
  for (const auto& [stage, s] : sums) detail += fmt(" %s=%.1f", stage.c_str(), s / counts[stage]);
  return {true, detail};
}

}  // namespace

int main() {
  StreetRun run;
  const FrameDims dims{512, 256};
  const int frames = 20;
  run.spec = synth::preset_scene("street", dims, frames);
  const auto dataset = run.dir.path() / "dataset";
  synth::write_dataset(run.spec, dataset);

  PipelineConfig cfg;
  cfg.dataset = dataset;
  cfg.output = run.dir.path() / "out";
  cfg.use_cache = false;
  run.frames.resize(frames);
  const auto start = std::chrono::steady_clock::now();
  run.report = run_pipeline(cfg, {0, frames - 1}, [&](const FrameProducts& p) {
    auto& f = run.frames[p.index];
    f.cg = p.cg;
    f.labels = p.semantics.labels;
    f.alpha = p.blends.at(BlendMode::visibility).alpha;
  });
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const synth::DatasetLayout layout{dataset};
  for (int t = 0; t < frames; ++t) run.frames[t].gt_depth = io::read_pfm(layout.gt_depth(t));

  report(1, "depth triangulation fidelity", criterion_1(run));
  report(2, "foreground probability properties", criterion_2());
  report(3, "visibility closed forms", criterion_3());
  report(4, "divergence point recovery", criterion_4());
  report(5, "TV-L1 accuracy, energy and determinism", criterion_5());
  report(6, "compositor conservation and mode equivalence", criterion_6());
  report(7, "end-to-end occlusion", criterion_7(run));
  report(8, "desk-scale timings (report only)", criterion_8(run));
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
