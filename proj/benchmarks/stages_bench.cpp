#include <benchmark/benchmark.h>

#include <numbers>
#include <vector>

#include "omniocc/compositor.hpp"
#include "omniocc/depth.hpp"
#include "omniocc/semantics.hpp"
#include "omniocc/synth.hpp"

namespace {

using namespace omniocc;
using namespace omniocc::synth;

constexpr int kWidth = 512;

// Rendered once and shared by every stage benchmark.
struct Fixture {
  SceneSpec spec;
  std::vector<FlowField> backward;  // backward[k]: frame k+1 -> frame k
  std::vector<DepthMap> depth;      // depth[k] for frame k+1
  RenderedFrame frame;
  CgLayer cg;
  ProbabilityMap prob;

  Fixture() : spec(preset_scene("street", FrameDims{kWidth, kWidth / 2}, 5)) {
    for (int t = 1; t < 5; ++t) {
      backward.push_back(ground_truth_flow(spec, t, t - 1));
      const auto& prev = spec.camera_path[t - 1];
      const auto& curr = spec.camera_path[t];
      depth.push_back(triangulate_depth_backward(backward.back(), spec.dims, prev, curr,
                                                 motion_direction(prev, curr))
                          .depth);
    }
    frame = render_scene(spec, 4);
    cg = make_cg_layer(spec, 4);
    prob = foreground_probability(depth.back(), cg.depth);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_DivergenceSearch(benchmark::State& state) {
  const Fixture& f = fixture();
  const DivergenceSearchRegion region{motion_direction(f.spec.camera_path[0], f.spec.camera_path[1]),
                                      10.0 * std::numbers::pi / 180.0,
                                      10.0 * std::numbers::pi / 180.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(find_divergence_point(f.backward[0], f.spec.dims, region));
  }
}
BENCHMARK(BM_DivergenceSearch)->Unit(benchmark::kMillisecond);

void BM_RefineMotionDirection(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto& prev = f.spec.camera_path[0];
  const auto& curr = f.spec.camera_path[1];
  const AngularPoint start = motion_direction(prev, curr);
  for (auto _ : state) {
    benchmark::DoNotOptimize(refine_motion_direction(f.backward[0], f.spec.dims, prev, curr, start));
  }
}
BENCHMARK(BM_RefineMotionDirection)->Unit(benchmark::kMillisecond);

void BM_Triangulate(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto& prev = f.spec.camera_path[0];
  const auto& curr = f.spec.camera_path[1];
  const AngularPoint div = motion_direction(prev, curr);
  for (auto _ : state) {
    benchmark::DoNotOptimize(triangulate_depth_backward(f.backward[0], f.spec.dims, prev, curr, div));
  }
}
BENCHMARK(BM_Triangulate)->Unit(benchmark::kMillisecond);

void BM_Fusion(benchmark::State& state) {
  const Fixture& f = fixture();
  const int n = static_cast<int>(state.range(0));
  std::vector<DepthHistoryEntry> history;
  std::vector<CameraPose> poses;
  for (int k = 4 - n; k < 4; ++k) {
    history.push_back({f.depth[k], f.backward[k]});
    poses.push_back(f.spec.camera_path[k + 1]);
  }
  const bool compensated = state.range(1) != 0;
  for (auto _ : state) {
    if (compensated) {
      benchmark::DoNotOptimize(fuse_depth_temporal_compensated(history, poses));
    } else {
      benchmark::DoNotOptimize(fuse_depth_temporal(history));
    }
  }
}
BENCHMARK(BM_Fusion)->ArgsProduct({{1, 2, 4}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_ForegroundProbability(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(foreground_probability(f.depth.back(), f.cg.depth));
  }
}
BENCHMARK(BM_ForegroundProbability)->Unit(benchmark::kMillisecond);

void BM_VisibilityBlend(benchmark::State& state) {
  const Fixture& f = fixture();
  const VisibilityField vis =
      visibility_field(f.frame.semantics, f.prob, VisibilityParams::defaults(), default_sigma());
  const BlendConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(visibility_blend(f.frame.frame, f.cg, vis, cfg));
  }
}
BENCHMARK(BM_VisibilityBlend)->Unit(benchmark::kMillisecond);

void BM_AlphaBlend(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(alpha_blend(f.frame.frame, f.cg, f.prob));
  }
}
BENCHMARK(BM_AlphaBlend)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
