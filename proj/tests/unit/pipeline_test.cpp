#include <gtest/gtest.h>

#include <fstream>
#include <memory>

#include <nlohmann/json.hpp>

#include "omniocc/errors.hpp"
#include "omniocc/io.hpp"
#include "omniocc/pipeline.hpp"
#include "omniocc/synth.hpp"
#include "test_support.hpp"

namespace omniocc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::TempDir;

constexpr int kFrames = 4;

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = std::make_unique<TempDir>("omniocc_pipeline");
    synth::write_dataset(synth::preset_scene("street", {128, 64}, kFrames), dataset());
  }
  static void TearDownTestSuite() { root_.reset(); }

  static fs::path dataset() { return root_->path() / "dataset"; }

  static PipelineConfig config_for(const std::string& name) {
    PipelineConfig cfg;
    cfg.dataset = dataset();
    cfg.output = root_->path() / name;
    cfg.cache_dir = root_->path() / (name + "_cache");
    cfg.blend.window = 16;
    return cfg;
  }

  static json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
  }

  static std::unique_ptr<TempDir> root_;
};

std::unique_ptr<TempDir> PipelineTest::root_;

TEST_F(PipelineTest, WritesAllProductsAndReport) {
  const auto cfg = config_for("basic");
  const EvalReport report = run_pipeline(cfg, {0, kFrames - 1});
  ASSERT_EQ(report.frames.size(), static_cast<std::size_t>(kFrames));
  EXPECT_EQ(report.failed_frames(), 0u);
  for (const auto& f : report.frames) {
    EXPECT_TRUE(f.ok) << f.error;
    for (const auto& t : f.timings) EXPECT_GE(t.milliseconds, 0.0);
    EXPECT_EQ(f.outputs.count("flow"), f.index > 0 ? 1u : 0u);
    for (const char* key : {"depth", "probmap", "composite/visibility", "composite/alpha",
                            "composite/fixed_transparency", "alpha/visibility"}) {
      ASSERT_EQ(f.outputs.count(key), 1u) << key;
      EXPECT_TRUE(fs::exists(cfg.output / f.outputs.at(key)));
    }
    if (f.index > 0) {
      ASSERT_TRUE(f.divergence.has_value());
      ASSERT_TRUE(f.raw_depth_error.has_value());
      EXPECT_GT(f.raw_depth_error->count, 0u);
    }
  }
  const json rep = read_json(cfg.output / "report.json");
  EXPECT_EQ(rep.at("schema"), "omniocc.report/1");
  EXPECT_EQ(rep.at("frames").size(), static_cast<std::size_t>(kFrames));
  const json manifest = read_json(cfg.output / "manifest.json");
  for (const auto& [file, sha] : manifest.at("files").items()) {
    EXPECT_EQ(io::sha256_file(cfg.output / file), sha.get<std::string>());
  }
}

TEST_F(PipelineTest, GroundTruthFlowGivesAccurateDepth) {
  auto cfg = config_for("gt_depth");
  cfg.use_ground_truth_flow = true;
  cfg.modes = {BlendMode::alpha};
  const EvalReport r = run_pipeline(cfg, {0, kFrames - 1});
  for (const auto& f : r.frames) {
    if (f.index == 0) continue;
    ASSERT_TRUE(f.raw_depth_error.has_value());
    EXPECT_GT(f.raw_depth_error->count, 100u);
    // The .flo file stores single precision, so exactness is limited by float rounding.
    EXPECT_LT(f.raw_depth_error->median_relative, 1e-4);
  }
}

TEST_F(PipelineTest, CacheCoherence) {
  auto cold = config_for("cache_a");
  cold.cache_dir = root_->path() / "shared_cache";
  auto warm = cold;
  warm.output = root_->path() / "cache_b";
  auto uncached = cold;
  uncached.output = root_->path() / "cache_c";
  uncached.use_cache = false;

  const auto r1 = run_pipeline(cold, {0, kFrames - 1});
  const auto r2 = run_pipeline(warm, {0, kFrames - 1});
  const auto r3 = run_pipeline(uncached, {0, kFrames - 1});
  for (int i = 1; i < kFrames; ++i) {
    EXPECT_FALSE(r1.frames[i].flow_cache_hit);
    EXPECT_TRUE(r2.frames[i].flow_cache_hit);
    EXPECT_FALSE(r3.frames[i].flow_cache_hit);
  }
  const json a = read_json(cold.output / "manifest.json").at("files");
  EXPECT_EQ(a, read_json(warm.output / "manifest.json").at("files"));
  EXPECT_EQ(a, read_json(uncached.output / "manifest.json").at("files"));
}

TEST_F(PipelineTest, GroundTruthFlowChangesOnlyDepthAndDownstream) {
  auto solver = config_for("iso_solver");
  auto truth = config_for("iso_truth");
  truth.use_ground_truth_flow = true;
  std::vector<FrameProducts> a, b;
  run_pipeline(solver, {0, 2}, [&](const FrameProducts& p) { a.push_back(p); });
  run_pipeline(truth, {0, 2}, [&](const FrameProducts& p) { b.push_back(p); });
  ASSERT_EQ(a.size(), 3u);
  ASSERT_EQ(b.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].real.pixels(), b[i].real.pixels());
    EXPECT_EQ(a[i].cg.color, b[i].cg.color);
    EXPECT_EQ(a[i].cg.depth.values, b[i].cg.depth.values);
    EXPECT_EQ(a[i].semantics.labels, b[i].semantics.labels);
    EXPECT_EQ(a[i].semantics.uncertainty, b[i].semantics.uncertainty);
  }
  EXPECT_NE(a[2].raw_depth.values, b[2].raw_depth.values);
}

TEST_F(PipelineTest, AlphaModeDiffersFromVisibilityOnlyInsideMask) {
  const auto cfg = config_for("modes");
  std::size_t inside_differences = 0;
  run_pipeline(cfg, {1, 2}, [&](const FrameProducts& p) {
    const auto& vis = p.blends.at(BlendMode::visibility).composite.pixels();
    const auto& alp = p.blends.at(BlendMode::alpha).composite.pixels();
    for (std::size_t i = 0; i < vis.size(); ++i) {
      if (p.cg.covers(i)) {
        inside_differences += !(vis[i] == alp[i]);
      } else {
        ASSERT_EQ(vis[i], alp[i]);
        ASSERT_EQ(vis[i], p.real.pixels()[i]);
      }
    }
  });
  EXPECT_GT(inside_differences, 0u);
}

TEST_F(PipelineTest, EmptyRangeGivesEmptyReport) {
  const auto cfg = config_for("empty");
  const EvalReport r = run_pipeline(cfg, {3, 2});
  EXPECT_TRUE(r.frames.empty());
  EXPECT_EQ(r.failed_frames(), 0u);
  const CompareReport c = compare_modes(cfg, {3, 2});
  EXPECT_TRUE(c.strips.empty());
  EXPECT_TRUE(c.modes.empty());
}

TEST_F(PipelineTest, MissingInputIsRecordedAndRunContinues) {
  TempDir copy("omniocc_pipeline_missing");
  fs::copy(dataset(), copy.path() / "ds", fs::copy_options::recursive);
  fs::remove(synth::DatasetLayout{copy.path() / "ds"}.labels(2));
  auto cfg = config_for("missing");
  cfg.dataset = copy.path() / "ds";
  cfg.use_ground_truth_flow = true;
  const EvalReport r = run_pipeline(cfg, {0, kFrames - 1});
  ASSERT_EQ(r.frames.size(), static_cast<std::size_t>(kFrames));
  EXPECT_EQ(r.failed_frames(), 1u);
  EXPECT_FALSE(r.frames[2].ok);
  EXPECT_FALSE(r.frames[2].error.empty());
  EXPECT_TRUE(r.frames[3].ok);
}

TEST_F(PipelineTest, CompareWritesStripsAndMetrics) {
  const auto cfg = config_for("compare");
  run_pipeline(cfg, {1, 2});
  const CompareReport c = compare_modes(cfg, {1, 2});
  ASSERT_EQ(c.strips.size(), 2u);
  const RgbaImage strip = io::read_rgba_png(c.strips[0]);
  EXPECT_EQ(strip.width(), 3 * 128);
  EXPECT_EQ(strip.height(), 64);
  EXPECT_EQ(c.modes.size(), 3u);
  EXPECT_TRUE(fs::exists(cfg.output / "compare" / "metrics.json"));
  EXPECT_TRUE(fs::exists(cfg.output / "compare" / "metrics.csv"));
  for (const auto& [name, m] : c.modes) {
    EXPECT_GT(m.mask_pixels, 0u) << name;
    EXPECT_GE(m.mean_alpha, 0.0);
    EXPECT_LE(m.mean_alpha, 1.0);
  }
}

TEST_F(PipelineTest, CompareWithoutOutputsIsDataError) {
  const auto cfg = config_for("compare_missing");
  EXPECT_THROW(compare_modes(cfg, {0, 1}), DataError);
}

TEST(PipelineBackground, VisibilityAndFixedModesAgree) {
  TempDir dir("omniocc_pipeline_bg");
  synth::SceneSpec spec = synth::preset_scene("wall", {128, 64}, 3);
  spec.primitives.erase(spec.primitives.begin() + 1);  // keep only the ground
  synth::Primitive cg;
  cg.center = {6.0, 1.0, -0.5};
  cg.radius = 0.8;
  cg.cg = true;
  spec.primitives.push_back(cg);
  synth::write_dataset(spec, dir.path() / "ds");
  PipelineConfig cfg;
  cfg.dataset = dir.path() / "ds";
  cfg.output = dir.path() / "out";
  cfg.use_ground_truth_flow = true;
  cfg.blend.window = 16;
  run_pipeline(cfg, {0, 2});
  const CompareReport c = compare_modes(cfg, {0, 2});
  const auto& v = c.modes.at("visibility");
  const auto& f = c.modes.at("fixed_transparency");
  EXPECT_GT(v.mask_pixels, 0u);
  EXPECT_EQ(v.mean_alpha, f.mean_alpha);
  EXPECT_EQ(v.mean_abs_difference, f.mean_abs_difference);
  for (int t = 0; t <= 2; ++t) {
    const auto name = synth::frame_name("composite", t, ".png");
    EXPECT_EQ(io::sha256_file(cfg.output / "composite" / "visibility" / name),
              io::sha256_file(cfg.output / "composite" / "fixed_transparency" / name));
  }
}

TEST(PipelineConfig, DefaultsAreValidAndRoundTrip) {
  const PipelineConfig d;
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.depth.fusion_frames, 5);
  EXPECT_DOUBLE_EQ(d.depth.triangulation.epsilon_deg, 0.2);
  EXPECT_DOUBLE_EQ(d.depth.triangulation.d_max, 1000.0);
  EXPECT_DOUBLE_EQ(d.depth.triangulation.baseline_min, 0.01);
  EXPECT_EQ(d.depth.divergence.kernel_size, 9);
  EXPECT_DOUBLE_EQ(d.depth.p_unknown, 0.5);
  const PipelineConfig back = parse_config(config_to_json(d));
  EXPECT_EQ(config_to_json(back), config_to_json(d));
}

TEST(PipelineConfig, OverridesAndTables) {
  const auto cfg = parse_config(R"({
    "schema": "omniocc.config/1",
    "flow": {"lambda": 50, "levels": 3},
    "depth": {"fusion_frames": 2, "k": 0.5},
    "visibility": {"table": {"Simple": [0.1, 0.05, 3.0, 2.0]}, "fixed_table": {"Complex": [1.0, 2.0]}},
    "modes": ["alpha"]
  })");
  EXPECT_EQ(cfg.flow.lambda, 50.0);
  EXPECT_EQ(cfg.flow.levels, 3);
  EXPECT_EQ(cfg.depth.fusion_frames, 2);
  EXPECT_EQ(cfg.visibility[Category::simple], (VisibilityLevels{0.1, 0.05, 3.0, 2.0}));
  EXPECT_EQ(cfg.visibility[Category::complex], VisibilityParams::defaults()[Category::complex]);
  EXPECT_EQ(cfg.fixed_visibility[Category::complex], (FixedVisibility{1.0, 2.0}));
  ASSERT_EQ(cfg.modes.size(), 1u);
  EXPECT_EQ(cfg.modes[0], BlendMode::alpha);
}

TEST(PipelineConfig, RejectsMalformedInput) {
  EXPECT_THROW(parse_config("{"), ConfigError);
  EXPECT_THROW(parse_config(R"({"bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"flow": {"lamda": 1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"schema": "omniocc.config/9"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"modes": ["sepia"]})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"flow": {"lambda": "high"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"visibility": {"table": {"Simple": [1, 2]}}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"visibility": {"table": {"Trees": [1, 2, 3, 4]}}})"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(PipelineConfig, ValidateRejectsOutOfRange) {
  PipelineConfig c;
  c.depth.fusion_frames = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.sigma = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.blend.window = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.modes.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.evaluation.max_depth = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(run_pipeline(c, {0, 1}), ConfigError);
}

TEST(DepthError, ExcludesFoeBandAndDepthRange) {
  const FrameDims dims{64, 32};
  DepthMap ref(64, 32), est(64, 32);
  ref.values.fill(10.0);
  ref.valid.fill(1);
  est = ref;
  for (auto& v : est.values.pixels()) v = 11.0;
  const auto s = depth_error(est, ref, dims, {1.5, 3.0}, {});
  EXPECT_GT(s.count, 0u);
  EXPECT_LT(s.count, 64u * 32u);
  EXPECT_NEAR(s.median_relative, 0.1, 1e-12);
  EXPECT_NEAR(s.mean_relative, 0.1, 1e-12);
  ref.values.fill(50.0);
  EXPECT_EQ(depth_error(est, ref, dims, {1.5, 3.0}, {}).count, 0u);
}

}  // namespace
}  // namespace omniocc
