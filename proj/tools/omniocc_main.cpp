// omniocc: command-line front end. Exit codes: 0 success, 1 configuration
// error, 2 data error (including a pipeline run with failed frames).

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "omniocc/errors.hpp"
#include "omniocc/io.hpp"
#include "omniocc/parallel.hpp"
#include "omniocc/pipeline.hpp"
#include "omniocc/synth.hpp"

namespace {

using namespace omniocc;

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;

// Optional CLI overrides; unset values keep the config file or default.
struct Overrides {
  std::optional<double> lambda, theta, tau, pyramid_scale;
  std::optional<int> iterations, levels, warps;
  bool no_median = false;

  std::optional<double> epsilon_deg, d_max, baseline_min, k, p_unknown, search_deg;
  std::optional<int> fusion_frames, kernel_size;
  bool literal_numerator = false;
  bool plain_fusion = false;

  std::optional<double> sigma, kappa, epsilon_d;
  std::optional<int> window;

  void add_flow(CLI::App* app) {
    app->add_option("--lambda", lambda, "TV-L1 data weight (default 100)");
    app->add_option("--theta", theta, "TV-L1 coupling (default 0.3)");
    app->add_option("--tau", tau, "TV-L1 dual step (default 0.25)");
    app->add_option("--iterations", iterations, "Iterations per pyramid level (default 115)");
    app->add_option("--pyramid-scale", pyramid_scale, "Pyramid ratio (default 0.5)");
    app->add_option("--levels", levels, "Pyramid levels (default 6)");
    app->add_option("--warps", warps, "Warps per level (default 5)");
    app->add_flag("--no-median", no_median, "Disable the 3x3 median filter between warps");
  }
  void add_depth(CLI::App* app) {
    app->add_option("--epsilon-deg", epsilon_deg, "Triangulation angle floor, degrees (default 0.2)");
    app->add_option("--d-max", d_max, "Depth clamp, metres (default 1000)");
    app->add_option("--baseline-min", baseline_min, "Minimum baseline, metres (default 0.01)");
    app->add_option("--kernel-size", kernel_size, "Divergence kernel side (default 9)");
    app->add_option("--search-deg", search_deg, "Divergence search half extent (default 10)");
    app->add_flag("--literal-numerator", literal_numerator,
                  "Use sin(alpha_t) in the numerator (distance from the previous camera)");
  }
  void add_fusion(CLI::App* app) {
    app->add_option("--fusion-frames", fusion_frames, "Temporal window N (default 5)");
    app->add_flag("--plain-fusion", plain_fusion, "Average warped depths without re-centering");
  }
  void add_probability(CLI::App* app) {
    app->add_option("--k", k, "Sigmoid scale of P_f, 1/m (default 1)");
    app->add_option("--p-unknown", p_unknown, "P_f where real depth is unknown (default 0.5)");
  }
  void add_blend(CLI::App* app) {
    app->add_option("--sigma", sigma, "Width of the P_f weight (default 1/(2 pi))");
    app->add_option("--window", window, "Blend window side, pixels (default 32)");
    app->add_option("--kappa", kappa, "Visibility calibration (default 0.2)");
    app->add_option("--epsilon-d", epsilon_d, "Contrast floor (default 0.01)");
  }

  void apply(PipelineConfig& c) const {
    if (lambda) c.flow.lambda = *lambda;
    if (theta) c.flow.theta = *theta;
    if (tau) c.flow.tau = *tau;
    if (iterations) c.flow.iterations = *iterations;
    if (pyramid_scale) c.flow.pyramid_scale = *pyramid_scale;
    if (levels) c.flow.levels = *levels;
    if (warps) c.flow.warps_per_level = *warps;
    if (no_median) c.flow.median_filter = false;
    auto& d = c.depth;
    if (epsilon_deg) d.triangulation.epsilon_deg = *epsilon_deg;
    if (d_max) d.triangulation.d_max = *d_max;
    if (baseline_min) d.triangulation.baseline_min = *baseline_min;
    if (literal_numerator) d.triangulation.literal_numerator = true;
    if (kernel_size) d.divergence.kernel_size = *kernel_size;
    if (search_deg) d.search_half_extent_deg = *search_deg;
    if (fusion_frames) d.fusion_frames = *fusion_frames;
    if (plain_fusion) d.compensated_fusion = false;
    if (k) d.k = *k;
    if (p_unknown) d.p_unknown = *p_unknown;
    if (sigma) c.sigma = *sigma;
    if (window) c.blend.window = *window;
    if (kappa) c.blend.kappa = *kappa;
    if (epsilon_d) c.blend.epsilon_d = *epsilon_d;
  }
};

struct RunOptions {
  std::string config_path, dataset, output, cache_dir;
  std::vector<std::string> modes;
  std::optional<int> first, last, max_in_flight;
  bool no_cache = false;
  bool gt_flow = false;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--dataset", dataset, "Dataset directory");
    app->add_option("--out", output, "Output directory");
    app->add_option("--cache-dir", cache_dir, "Flow cache directory (env OMNIOCC_CACHE_DIR)");
    app->add_flag("--no-cache", no_cache, "Disable the flow cache");
    app->add_flag("--gt-flow", gt_flow, "Use the dataset's ground-truth flow");
    app->add_option("--mode", modes, "Blend mode(s): visibility, alpha, fixed_transparency");
    app->add_option("--first", first, "First frame (default 0)");
    app->add_option("--last", last, "Last frame, inclusive (default: last in dataset)");
    app->add_option("--max-in-flight", max_in_flight, "Frames in flight (default 4)");
  }

  PipelineConfig build(const Overrides& o) const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (const char* env = std::getenv("OMNIOCC_CACHE_DIR"); env && *env && c.cache_dir.empty()) {
      c.cache_dir = env;
    }
    if (!dataset.empty()) c.dataset = dataset;
    if (!output.empty()) c.output = output;
    if (!cache_dir.empty()) c.cache_dir = cache_dir;
    if (c.cache_dir.empty() && !c.output.empty()) c.cache_dir = c.output / "cache";
    if (no_cache) c.use_cache = false;
    if (gt_flow) c.use_ground_truth_flow = true;
    if (max_in_flight) c.max_in_flight = *max_in_flight;
    if (!modes.empty()) {
      c.modes.clear();
      for (const auto& m : modes) {
        const auto mode = blend_mode_from_string(m);
        if (!mode) throw ConfigError("unknown blend mode: " + m);
        c.modes.push_back(*mode);
      }
    }
    o.apply(c);
    if (c.dataset.empty()) throw ConfigError("a dataset directory is required");
    if (c.output.empty()) throw ConfigError("an output directory is required");
    c.validate();
    return c;
  }

  FrameRange range(const PipelineConfig& c) const {
    FrameRange r;
    r.first = first.value_or(0);
    r.last = last ? *last : dataset_frame_count(c.dataset) - 1;
    return r;
  }
};

void apply_thread_env() {
  if (const char* env = std::getenv("OMNIOCC_THREADS"); env && *env) {
    try {
      const int n = std::stoi(env);
      if (n < 0) throw std::out_of_range("negative");
      set_thread_count(n);
    } catch (const std::exception&) {
      throw ConfigError(std::string("OMNIOCC_THREADS must be a non-negative integer, got '") + env + "'");
    }
  }
}

BlendMode parse_mode(const std::string& name) {
  const auto mode = blend_mode_from_string(name);
  if (!mode) throw ConfigError("unknown blend mode: " + name);
  return *mode;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Occlusion-aware compositing of CG into equirectangular sequences"};
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (0 = all cores; env OMNIOCC_THREADS)");

  Overrides o;

  std::string ref_png, target_png, flow_out;
  auto* flow_cmd = app.add_subcommand("flow", "TV-L1 flow from a reference frame to a target frame");
  flow_cmd->add_option("--reference", ref_png, "Reference PNG")->required();
  flow_cmd->add_option("--target", target_png, "Target PNG")->required();
  flow_cmd->add_option("--out", flow_out, "Output .flo")->required();
  o.add_flow(flow_cmd);

  std::string depth_flow, depth_poses, depth_out;
  int depth_frame = 0;
  auto* depth_cmd = app.add_subcommand("depth", "Triangulate depth of frame t from backward flow t -> t-1");
  depth_cmd->add_option("--flow", depth_flow, "Backward flow .flo")->required();
  depth_cmd->add_option("--poses", depth_poses, "Pose manifest")->required();
  depth_cmd->add_option("--frame", depth_frame, "Current frame index t (>= 1)")->required();
  depth_cmd->add_option("--out", depth_out, "Output PFM")->required();
  o.add_depth(depth_cmd);

  std::string pm_depth, pm_cg_depth, pm_out;
  auto* prob_cmd = app.add_subcommand("probmap", "Foreground probability map from real and CG depth");
  prob_cmd->add_option("--depth", pm_depth, "Real depth PFM")->required();
  prob_cmd->add_option("--cg-depth", pm_cg_depth, "CG depth PFM")->required();
  prob_cmd->add_option("--out", pm_out, "Output PFM")->required();
  o.add_probability(prob_cmd);

  std::string cp_frame, cp_cg, cp_cg_depth, cp_prob, cp_labels, cp_unc, cp_out, cp_alpha_out;
  std::string cp_mode = "visibility";
  auto* comp_cmd = app.add_subcommand("composite", "Blend a CG layer into one frame");
  comp_cmd->add_option("--frame", cp_frame, "Real frame PNG")->required();
  comp_cmd->add_option("--cg", cp_cg, "CG colour RGBA PNG")->required();
  comp_cmd->add_option("--cg-depth", cp_cg_depth, "CG depth PFM")->required();
  comp_cmd->add_option("--probmap", cp_prob, "P_f PFM")->required();
  comp_cmd->add_option("--labels", cp_labels, "Label PNG");
  comp_cmd->add_option("--uncertainty", cp_unc, "Uncertainty PNG");
  comp_cmd->add_option("--mode", cp_mode, "visibility, alpha or fixed_transparency");
  comp_cmd->add_option("--out", cp_out, "Output PNG")->required();
  comp_cmd->add_option("--alpha-out", cp_alpha_out, "Optional per-pixel alpha PFM");
  o.add_blend(comp_cmd);

  RunOptions run_opts;
  auto* pipe_cmd = app.add_subcommand("pipeline", "Run every stage over a frame range");
  run_opts.add(pipe_cmd);
  o.add_flow(pipe_cmd);
  o.add_depth(pipe_cmd);
  o.add_fusion(pipe_cmd);
  o.add_probability(pipe_cmd);
  o.add_blend(pipe_cmd);

  RunOptions cmp_opts;
  auto* cmp_cmd = app.add_subcommand("compare", "Side-by-side strips and metrics for pipeline outputs");
  cmp_opts.add(cmp_cmd);

  std::string scene_file, preset, synth_out, save_scene;
  int synth_width = 512;
  int synth_frames = 20;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic dataset");
  auto* scene_opt = synth_cmd->add_option("--scene", scene_file, "Scene JSON")->check(CLI::ExistingFile);
  synth_cmd->add_option("--preset", preset, "Built-in scene: street or wall")->excludes(scene_opt);
  synth_cmd->add_option("--width", synth_width, "Frame width for presets (height = width / 2)");
  synth_cmd->add_option("--frames", synth_frames, "Frame count for presets");
  synth_cmd->add_option("--out", synth_out, "Dataset directory")->required();
  synth_cmd->add_option("--save-scene", save_scene, "Also write the scene JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    apply_thread_env();
    if (threads) {
      if (*threads < 0) throw ConfigError("--threads must be >= 0");
      set_thread_count(*threads);
    }

    if (flow_cmd->parsed()) {
      PipelineConfig c;
      o.apply(c);
      c.flow.validate();
      const auto ref = to_grayscale(io::read_frame_png(ref_png).pixels());
      const auto tgt = to_grayscale(io::read_frame_png(target_png).pixels());
      if (!ref.same_shape(tgt)) throw DataError("reference and target dimensions differ");
      io::write_flo(flow_out, compute_flow(ref, tgt, c.flow));
    } else if (depth_cmd->parsed()) {
      PipelineConfig c;
      o.apply(c);
      c.validate();
      const auto poses = io::read_pose_manifest(depth_poses);
      auto find = [&poses](int idx) -> const CameraPose& {
        for (const auto& p : poses) {
          if (p.index == idx) return p;
        }
        throw DataError("no pose for frame " + std::to_string(idx));
      };
      const FlowField flow = io::read_flo(depth_flow);
      const FrameDims dims{flow.width(), flow.height()};
      try {
        dims.validate();
      } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
      }
      const DepthEstimate est =
          estimate_depth(flow, dims, find(depth_frame - 1), find(depth_frame), c.depth);
      io::write_pfm(depth_out, est.triangulation.depth);
      std::cout << "divergence theta=" << est.divergence.point.theta
                << " phi=" << est.divergence.point.phi << " response=" << est.divergence.response
                << (est.divergence.fallback ? " (fallback)" : "") << '\n';
      if (est.triangulation.status == TriangulationStatus::baseline_too_small) {
        std::cout << "baseline below minimum: depth map is empty\n";
      }
    } else if (prob_cmd->parsed()) {
      PipelineConfig c;
      o.apply(c);
      c.validate();
      const DepthMap real = io::read_pfm(pm_depth);
      const DepthMap cg = io::read_pfm(pm_cg_depth);
      if (!real.values.same_shape(cg.values)) throw DataError("depth map dimensions differ");
      io::write_pfm(pm_out, foreground_probability(real, cg, c.depth.k, c.depth.p_unknown));
    } else if (comp_cmd->parsed()) {
      PipelineConfig c;
      o.apply(c);
      c.validate();
      const BlendMode mode = parse_mode(cp_mode);
      const SphericalFrame real = io::read_frame_png(cp_frame);
      const CgLayer cg = io::read_cg_layer(cp_cg, cp_cg_depth);
      const ProbabilityMap prob = io::read_pfm_dense(cp_prob);
      if (!prob.same_shape(cg.color) || cg.width() != real.width() || cg.height() != real.height()) {
        throw DataError("frame, CG layer and probability map dimensions differ");
      }
      BlendResult result;
      if (mode == BlendMode::alpha) {
        result = alpha_blend(real, cg, prob);
      } else {
        if (cp_labels.empty() || cp_unc.empty()) {
          throw ConfigError("--labels and --uncertainty are required for this mode");
        }
        const SemanticMap sem = io::read_semantic_map(cp_labels, cp_unc);
        if (sem.width() != real.width() || sem.height() != real.height()) {
          throw DataError("label map dimensions differ");
        }
        result = mode == BlendMode::visibility
                     ? visibility_blend(real, cg, visibility_field(sem, prob, c.visibility, c.sigma),
                                        c.blend)
                     : fixed_transparency_blend(real, cg, group_categories(sem), prob,
                                                c.fixed_visibility, c.sigma, c.blend);
      }
      io::write_frame_png(cp_out, result.composite.pixels());
      if (!cp_alpha_out.empty()) io::write_pfm(cp_alpha_out, result.alpha);
    } else if (pipe_cmd->parsed()) {
      const PipelineConfig c = run_opts.build(o);
      const EvalReport report = run_pipeline(c, run_opts.range(c));
      for (const auto& f : report.frames) {
        if (!f.ok) std::cerr << "frame " << f.index << ": " << f.error << '\n';
      }
      std::cout << report.frames.size() << " frame(s), " << report.failed_frames()
                << " failed, " << report.total_milliseconds << " ms; report: "
                << (c.output / "report.json").string() << '\n';
      if (report.failed_frames() > 0) return kExitData;
    } else if (cmp_cmd->parsed()) {
      const PipelineConfig c = cmp_opts.build(Overrides{});
      const CompareReport report = compare_modes(c, cmp_opts.range(c));
      std::cout << "mode,mask_pixels,mean_alpha,mean_abs_difference,high_frequency_energy\n";
      for (const auto& [name, m] : report.modes) {
        std::cout << name << ',' << m.mask_pixels << ',' << m.mean_alpha << ','
                  << m.mean_abs_difference << ',' << m.high_frequency_energy << '\n';
      }
    } else if (synth_cmd->parsed()) {
      if (scene_file.empty() == preset.empty()) {
        throw ConfigError("synth needs exactly one of --scene or --preset");
      }
      const synth::SceneSpec spec =
          scene_file.empty()
              ? synth::preset_scene(preset, {synth_width, synth_width / 2}, synth_frames)
              : synth::load_scene(scene_file);
      synth::write_dataset(spec, synth_out);
      if (!save_scene.empty()) synth::save_scene(save_scene, spec);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
