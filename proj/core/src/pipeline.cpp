#include "omniocc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <future>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "omniocc/errors.hpp"
#include "omniocc/io.hpp"
#include "omniocc/synth.hpp"

namespace omniocc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

// ---------------------------------------------------------------- config

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

json visibility_table_json(const VisibilityParams& v) {
  json t = json::object();
  for (auto c : {Category::background, Category::simple, Category::complex}) {
    const auto& l = v[c];
    t[std::string(to_string(c))] = {l.v_f1, l.v_f2, l.v_b1, l.v_b2};
  }
  return t;
}

json fixed_table_json(const FixedVisibilityParams& v) {
  json t = json::object();
  for (auto c : {Category::background, Category::simple, Category::complex}) {
    t[std::string(to_string(c))] = {v[c].v_f, v[c].v_b};
  }
  return t;
}

Category category_key(const std::string& key) {
  const auto c = category_from_string(key);
  if (!c) throw ConfigError("config: unknown category '" + key + "'");
  return *c;
}

PipelineConfig config_from_json(const json& doc) {
  check_keys(doc, "<root>",
             {"schema", "dataset", "output", "cache_dir", "use_cache", "use_ground_truth_flow",
              "max_in_flight", "modes", "flow", "depth", "visibility", "blend", "evaluation"});
  if (doc.value("schema", std::string{"omniocc.config/1"}) != "omniocc.config/1") {
    throw ConfigError("config: unsupported schema");
  }
  PipelineConfig cfg;
  if (doc.contains("dataset")) cfg.dataset = doc.at("dataset").get<std::string>();
  if (doc.contains("output")) cfg.output = doc.at("output").get<std::string>();
  if (doc.contains("cache_dir")) cfg.cache_dir = doc.at("cache_dir").get<std::string>();
  read_opt(doc, "use_cache", cfg.use_cache);
  read_opt(doc, "use_ground_truth_flow", cfg.use_ground_truth_flow);
  read_opt(doc, "max_in_flight", cfg.max_in_flight);
  if (doc.contains("modes")) {
    cfg.modes.clear();
    for (const auto& m : doc.at("modes")) {
      const auto mode = blend_mode_from_string(m.get<std::string>());
      if (!mode) throw ConfigError("config: unknown blend mode '" + m.get<std::string>() + "'");
      cfg.modes.push_back(*mode);
    }
  }
  if (doc.contains("flow")) {
    const auto& f = doc.at("flow");
    check_keys(f, "flow",
               {"lambda", "theta", "tau", "iterations", "pyramid_scale", "levels",
                "warps_per_level", "median_filter", "wrap_horizontal", "min_level_size"});
    read_opt(f, "lambda", cfg.flow.lambda);
    read_opt(f, "theta", cfg.flow.theta);
    read_opt(f, "tau", cfg.flow.tau);
    read_opt(f, "iterations", cfg.flow.iterations);
    read_opt(f, "pyramid_scale", cfg.flow.pyramid_scale);
    read_opt(f, "levels", cfg.flow.levels);
    read_opt(f, "warps_per_level", cfg.flow.warps_per_level);
    read_opt(f, "median_filter", cfg.flow.median_filter);
    read_opt(f, "wrap_horizontal", cfg.flow.wrap_horizontal);
    read_opt(f, "min_level_size", cfg.flow.min_level_size);
  }
  if (doc.contains("depth")) {
    const auto& d = doc.at("depth");
    check_keys(d, "depth",
               {"epsilon_deg", "d_max", "baseline_min", "literal_numerator", "kernel_size",
                "min_valid_fraction", "min_response", "subpixel", "search_half_extent_deg",
                "epipolar_refinement", "fusion_frames",
                "compensated_fusion", "k", "p_unknown"});
    read_opt(d, "epsilon_deg", cfg.depth.triangulation.epsilon_deg);
    read_opt(d, "d_max", cfg.depth.triangulation.d_max);
    read_opt(d, "baseline_min", cfg.depth.triangulation.baseline_min);
    read_opt(d, "literal_numerator", cfg.depth.triangulation.literal_numerator);
    read_opt(d, "kernel_size", cfg.depth.divergence.kernel_size);
    read_opt(d, "min_valid_fraction", cfg.depth.divergence.min_valid_fraction);
    read_opt(d, "min_response", cfg.depth.divergence.min_response);
    read_opt(d, "subpixel", cfg.depth.divergence.subpixel);
    read_opt(d, "search_half_extent_deg", cfg.depth.search_half_extent_deg);
    read_opt(d, "epipolar_refinement", cfg.depth.epipolar_refinement);
    read_opt(d, "fusion_frames", cfg.depth.fusion_frames);
    read_opt(d, "compensated_fusion", cfg.depth.compensated_fusion);
    read_opt(d, "k", cfg.depth.k);
    read_opt(d, "p_unknown", cfg.depth.p_unknown);
  }
  if (doc.contains("visibility")) {
    const auto& v = doc.at("visibility");
    check_keys(v, "visibility", {"sigma", "table", "fixed_table"});
    read_opt(v, "sigma", cfg.sigma);
    if (v.contains("table")) {
      for (const auto& [key, row] : v.at("table").items()) {
        const auto a = row.get<std::array<double, 4>>();
        cfg.visibility[category_key(key)] = {a[0], a[1], a[2], a[3]};
      }
    }
    if (v.contains("fixed_table")) {
      for (const auto& [key, row] : v.at("fixed_table").items()) {
        const auto a = row.get<std::array<double, 2>>();
        cfg.fixed_visibility[category_key(key)] = {a[0], a[1]};
      }
    }
  }
  if (doc.contains("blend")) {
    const auto& b = doc.at("blend");
    check_keys(b, "blend", {"window", "kappa", "epsilon_d"});
    read_opt(b, "window", cfg.blend.window);
    read_opt(b, "kappa", cfg.blend.kappa);
    read_opt(b, "epsilon_d", cfg.blend.epsilon_d);
  }
  if (doc.contains("evaluation")) {
    const auto& e = doc.at("evaluation");
    check_keys(e, "evaluation", {"min_depth", "max_depth", "foe_exclusion_deg"});
    read_opt(e, "min_depth", cfg.evaluation.min_depth);
    read_opt(e, "max_depth", cfg.evaluation.max_depth);
    read_opt(e, "foe_exclusion_deg", cfg.evaluation.foe_exclusion_deg);
  }
  cfg.validate();
  return cfg;
}

json flow_params_json(const FlowParams& f) {
  return {{"lambda", f.lambda},
          {"theta", f.theta},
          {"tau", f.tau},
          {"iterations", f.iterations},
          {"pyramid_scale", f.pyramid_scale},
          {"levels", f.levels},
          {"warps_per_level", f.warps_per_level},
          {"median_filter", f.median_filter},
          {"wrap_horizontal", f.wrap_horizontal},
          {"min_level_size", f.min_level_size}};
}

json config_json(const PipelineConfig& cfg) {
  json modes = json::array();
  for (auto m : cfg.modes) modes.push_back(std::string(to_string(m)));
  const auto& d = cfg.depth;
  return {{"schema", "omniocc.config/1"},
          {"dataset", cfg.dataset.generic_string()},
          {"output", cfg.output.generic_string()},
          {"cache_dir", cfg.cache_dir.generic_string()},
          {"use_cache", cfg.use_cache},
          {"use_ground_truth_flow", cfg.use_ground_truth_flow},
          {"max_in_flight", cfg.max_in_flight},
          {"modes", modes},
          {"flow", flow_params_json(cfg.flow)},
          {"depth",
           {{"epsilon_deg", d.triangulation.epsilon_deg},
            {"d_max", d.triangulation.d_max},
            {"baseline_min", d.triangulation.baseline_min},
            {"literal_numerator", d.triangulation.literal_numerator},
            {"kernel_size", d.divergence.kernel_size},
            {"min_valid_fraction", d.divergence.min_valid_fraction},
            {"min_response", d.divergence.min_response},
            {"subpixel", d.divergence.subpixel},
            {"search_half_extent_deg", d.search_half_extent_deg},
            {"epipolar_refinement", d.epipolar_refinement},
            {"fusion_frames", d.fusion_frames},
            {"compensated_fusion", d.compensated_fusion},
            {"k", d.k},
            {"p_unknown", d.p_unknown}}},
          {"visibility",
           {{"sigma", cfg.sigma},
            {"table", visibility_table_json(cfg.visibility)},
            {"fixed_table", fixed_table_json(cfg.fixed_visibility)}}},
          {"blend",
           {{"window", cfg.blend.window},
            {"kappa", cfg.blend.kappa},
            {"epsilon_d", cfg.blend.epsilon_d}}},
          {"evaluation",
           {{"min_depth", cfg.evaluation.min_depth},
            {"max_depth", cfg.evaluation.max_depth},
            {"foe_exclusion_deg", cfg.evaluation.foe_exclusion_deg}}}};
}

// ---------------------------------------------------------------- helpers

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string mode_name(BlendMode m) { return std::string(to_string(m)); }

struct OutputLayout {
  fs::path root;
  fs::path flow(int i) const { return root / "flow" / synth::frame_name("flow", i, ".flo"); }
  fs::path depth(int i) const { return root / "depth" / synth::frame_name("depth", i, ".pfm"); }
  fs::path probmap(int i) const {
    return root / "probmap" / synth::frame_name("probmap", i, ".pfm");
  }
  fs::path composite(BlendMode m, int i) const {
    return root / "composite" / mode_name(m) / synth::frame_name("composite", i, ".png");
  }
  fs::path alpha(BlendMode m, int i) const {
    return root / "alpha" / mode_name(m) / synth::frame_name("alpha", i, ".pfm");
  }
  fs::path strip(int i) const { return root / "compare" / synth::frame_name("strip", i, ".png"); }
};

struct FlowOutcome {
  FlowField flow;
  bool has_flow = false;
  bool cache_hit = false;
  double milliseconds = 0.0;
  std::string error;
};

// The flow stage has no dependency on depth history, so it runs ahead of
// the sequential part of the pipeline.
FlowOutcome flow_stage(const PipelineConfig& cfg, const synth::DatasetLayout& in, int t) {
  FlowOutcome out;
  const auto start = Clock::now();
  try {
    if (t == 0) return out;
    if (cfg.use_ground_truth_flow) {
      out.flow = io::read_flo(in.gt_flow(t));
    } else {
      fs::path cached;
      if (cfg.use_cache && !cfg.cache_dir.empty()) {
        const std::string key = io::sha256_string(
            io::sha256_file(in.frame(t)) + io::sha256_file(in.frame(t - 1)) +
            flow_params_json(cfg.flow).dump());
        cached = cfg.cache_dir / "flow" / (key + ".flo");
        if (fs::exists(cached)) {
          out.flow = io::read_flo(cached);
          out.cache_hit = true;
        }
      }
      if (!out.cache_hit) {
        const auto curr = to_grayscale(io::read_frame_png(in.frame(t), t).pixels());
        const auto prev = to_grayscale(io::read_frame_png(in.frame(t - 1), t - 1).pixels());
        out.flow = compute_flow(curr, prev, cfg.flow);
        if (!cached.empty()) {
          fs::create_directories(cached.parent_path());
          const fs::path tmp = cached.string() + ".tmp";
          io::write_flo(tmp, out.flow);
          fs::rename(tmp, cached);
        }
      }
    }
    // Same values whether the flow came from the solver or from disk.
    out.flow.quantize_to_float();
    out.has_flow = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.milliseconds = ms_since(start);
  return out;
}

void quantize_depth(DepthMap& depth) {
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    depth.values[i] = depth.valid[i] ? static_cast<double>(static_cast<float>(depth.values[i])) : 0.0;
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

json stats_json(const DepthErrorStats& s) {
  return {{"count", s.count}, {"median_relative", s.median_relative}, {"mean_relative", s.mean_relative}};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace

// ---------------------------------------------------------------- public

void PipelineConfig::validate() const {
  flow.validate();
  blend.validate();
  visibility.validate();
  fixed_visibility.validate();
  if (max_in_flight < 1) throw ConfigError("config: max_in_flight must be >= 1");
  if (modes.empty()) throw ConfigError("config: at least one blend mode is required");
  const auto& t = depth.triangulation;
  if (!(t.epsilon_deg > 0.0 && t.epsilon_deg < 90.0)) {
    throw ConfigError("config: epsilon_deg must be in (0, 90)");
  }
  if (!(t.d_max > 0.0)) throw ConfigError("config: d_max must be positive");
  if (!(t.baseline_min >= 0.0)) throw ConfigError("config: baseline_min must be >= 0");
  const auto& dv = depth.divergence;
  if (dv.kernel_size < 3 || dv.kernel_size % 2 == 0) {
    throw ConfigError("config: kernel_size must be odd and >= 3");
  }
  if (!(dv.min_valid_fraction >= 0.0 && dv.min_valid_fraction <= 1.0)) {
    throw ConfigError("config: min_valid_fraction must be in [0, 1]");
  }
  if (!(dv.min_response >= 0.0 && dv.min_response <= 1.0)) {
    throw ConfigError("config: min_response must be in [0, 1]");
  }
  if (!(depth.search_half_extent_deg > 0.0 && depth.search_half_extent_deg <= 90.0)) {
    throw ConfigError("config: search_half_extent_deg must be in (0, 90]");
  }
  if (depth.fusion_frames < 1) throw ConfigError("config: fusion_frames must be >= 1");
  if (!(depth.k > 0.0) || !std::isfinite(depth.k)) throw ConfigError("config: k must be positive");
  if (!(depth.p_unknown >= 0.0 && depth.p_unknown <= 1.0)) {
    throw ConfigError("config: p_unknown must be in [0, 1]");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("config: sigma must be positive");
  if (!(evaluation.min_depth >= 0.0 && evaluation.max_depth > evaluation.min_depth)) {
    throw ConfigError("config: evaluation depth range is empty");
  }
}

PipelineConfig parse_config(const std::string& json_text) {
  try {
    return config_from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const PipelineConfig& config) { return config_json(config).dump(2); }

std::size_t EvalReport::failed_frames() const {
  return static_cast<std::size_t>(
      std::count_if(frames.begin(), frames.end(), [](const FrameReport& f) { return !f.ok; }));
}

std::string report_to_json(const EvalReport& report) {
  json frames = json::array();
  for (const auto& f : report.frames) {
    json timings = json::object();
    for (const auto& t : f.timings) timings[t.stage] = t.milliseconds;
    json fj{{"index", f.index}, {"status", f.ok ? "ok" : "error"}, {"timings_ms", timings},
            {"flow_cache_hit", f.flow_cache_hit}, {"outputs", f.outputs}};
    if (!f.ok) fj["error"] = f.error;
    if (f.divergence) {
      fj["divergence"] = {{"theta", f.divergence->point.theta},
                          {"phi", f.divergence->point.phi},
                          {"response", f.divergence->response},
                          {"fallback", f.divergence->fallback}};
    }
    if (f.raw_depth_error) fj["raw_depth_error"] = stats_json(*f.raw_depth_error);
    if (f.fused_depth_error) fj["fused_depth_error"] = stats_json(*f.fused_depth_error);
    frames.push_back(std::move(fj));
  }
  const json doc{{"schema", "omniocc.report/" + std::to_string(report.schema_version)},
                 {"first", report.range.first},
                 {"last", report.range.last},
                 {"failed_frames", report.failed_frames()},
                 {"total_ms", report.total_milliseconds},
                 {"frames", frames}};
  return doc.dump(2);
}

int dataset_frame_count(const fs::path& dataset) {
  return static_cast<int>(io::read_pose_manifest(synth::DatasetLayout{dataset}.poses()).size());
}

DepthErrorStats depth_error(const DepthMap& estimate, const DepthMap& reference, FrameDims dims,
                            const AngularPoint& foe, const EvaluationParams& params) {
  if (!estimate.values.same_shape(reference.values)) {
    throw std::invalid_argument("depth_error: dimension mismatch");
  }
  const Eigen::Vector3d foe_dir = angles_to_direction(foe);
  std::vector<double> errors;
  for (int y = 0; y < dims.height; ++y) {
    for (int x = 0; x < dims.width; ++x) {
      if (!estimate.is_valid(x, y) || !reference.is_valid(x, y)) continue;
      const double ref = reference.values(x, y);
      if (ref < params.min_depth || ref > params.max_depth) continue;
      const double angle = angle_between(pixel_to_direction(pixel_center(x, y), dims), foe_dir);
      if (angle <= params.foe_exclusion_deg * kDegree) continue;
      errors.push_back(std::abs(estimate.values(x, y) - ref) / ref);
    }
  }
  DepthErrorStats s;
  s.count = errors.size();
  if (errors.empty()) return s;
  double sum = 0.0;
  for (double e : errors) sum += e;
  s.mean_relative = sum / static_cast<double>(errors.size());
  s.median_relative = median(std::move(errors));
  return s;
}

DepthEstimate estimate_depth(const FlowField& flow_curr_to_prev, FrameDims dims,
                             const CameraPose& pose_prev, const CameraPose& pose_curr,
                             const DepthStageParams& params) {
  DepthEstimate out;
  const AngularPoint motion = motion_direction(pose_prev, pose_curr);
  const double half = params.search_half_extent_deg * kDegree;
  out.divergence = find_divergence_point(flow_curr_to_prev, dims, {motion, half, half},
                                         params.divergence);
  if (params.epipolar_refinement) {
    const AngularPoint refined =
        refine_motion_direction(flow_curr_to_prev, dims, pose_prev, pose_curr, out.divergence.point);
    const Eigen::Vector3d r = angles_to_direction(refined);
    const double from_center = angle_between(r, angles_to_direction(motion));
    if (from_center <= std::sqrt(2.0) * half) out.divergence.point = refined;
  }
  out.triangulation = triangulate_depth_backward(flow_curr_to_prev, dims, pose_prev, pose_curr,
                                                 out.divergence.point, params.triangulation);
  return out;
}

EvalReport run_pipeline(const PipelineConfig& config, FrameRange range,
                        const FrameObserver& observer) {
  config.validate();
  const auto run_start = Clock::now();
  EvalReport report;
  report.range = range;
  if (range.empty()) return report;
  if (range.first < 0) throw ConfigError("frame range starts before frame 0");

  const synth::DatasetLayout in{config.dataset};
  const OutputLayout out{config.output};
  std::vector<CameraPose> poses;
  try {
    poses = io::read_pose_manifest(in.poses());
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  auto pose_of = [&poses](int t) -> const CameraPose& {
    for (const auto& p : poses) {
      if (p.index == t) return p;
    }
    throw DataError("no pose for frame " + std::to_string(t));
  };

  std::deque<std::future<FlowOutcome>> in_flight;
  int next_launch = range.first;
  auto launch_until = [&](int limit) {
    while (next_launch <= std::min(limit, range.last)) {
      const int t = next_launch++;
      in_flight.push_back(std::async(std::launch::async,
                                     [&config, &in, t] { return flow_stage(config, in, t); }));
    }
  };

  std::deque<DepthHistoryEntry> history;
  std::deque<CameraPose> history_poses;
  json manifest_files = json::object();
  auto record = [&](FrameReport& fr, const std::string& key, const fs::path& p) {
    fr.outputs[key] = fs::relative(p, config.output).generic_string();
    manifest_files[fr.outputs[key]] = io::sha256_file(p);
  };

  for (int t = range.first; t <= range.last; ++t) {
    launch_until(t + config.max_in_flight - 1);
    FlowOutcome flow = in_flight.front().get();
    in_flight.pop_front();

    FrameReport fr;
    fr.index = t;
    fr.flow_cache_hit = flow.cache_hit;
    try {
      auto stage_start = Clock::now();
      auto lap = [&](const char* stage) {
        fr.timings.push_back({stage, ms_since(stage_start)});
        stage_start = Clock::now();
      };
      FrameProducts p;
      p.index = t;
      p.pose = pose_of(t);
      p.real = io::read_frame_png(in.frame(t), t);
      p.cg = io::read_cg_layer(in.cg_color(t), in.cg_depth(t));
      p.semantics = io::read_semantic_map(in.labels(t), in.uncertainty(t));
      const FrameDims dims = p.real.dims();
      if (p.cg.width() != dims.width || p.semantics.width() != dims.width ||
          p.cg.height() != dims.height || p.semantics.height() != dims.height) {
        throw DataError("frame " + std::to_string(t) + ": input dimensions differ");
      }
      lap("load");
      fr.timings.push_back({"flow", flow.milliseconds});
      if (!flow.error.empty()) throw DataError(flow.error);

      p.raw_depth = DepthMap(dims.width, dims.height);
      if (flow.has_flow) {
        p.flow = std::move(flow.flow);
        const CameraPose& prev = pose_of(t - 1);
        const DepthEstimate est = estimate_depth(p.flow, dims, prev, p.pose, config.depth);
        p.divergence = est.divergence;
        fr.divergence = est.divergence;
        p.raw_depth = est.triangulation.depth;
        quantize_depth(p.raw_depth);
      }
      lap("depth");

      if (!flow.has_flow) {
        history.clear();
        history_poses.clear();
      }
      history.push_back({p.raw_depth, p.flow});
      history_poses.push_back(p.pose);
      while (static_cast<int>(history.size()) > config.depth.fusion_frames) {
        history.pop_front();
        history_poses.pop_front();
      }
      const std::vector<DepthHistoryEntry> hist(history.begin(), history.end());
      const std::vector<CameraPose> hist_poses(history_poses.begin(), history_poses.end());
      p.fused_depth = config.depth.compensated_fusion
                          ? fuse_depth_temporal_compensated(hist, hist_poses)
                          : fuse_depth_temporal(hist);
      quantize_depth(p.fused_depth);
      lap("fusion");

      p.probability = foreground_probability(p.fused_depth, p.cg.depth, config.depth.k,
                                             config.depth.p_unknown);
      lap("probmap");

      for (BlendMode mode : config.modes) {
        switch (mode) {
          case BlendMode::alpha:
            p.blends[mode] = alpha_blend(p.real, p.cg, p.probability);
            break;
          case BlendMode::visibility: {
            const VisibilityField vis =
                visibility_field(p.semantics, p.probability, config.visibility, config.sigma);
            p.blends[mode] = visibility_blend(p.real, p.cg, vis, config.blend);
            break;
          }
          case BlendMode::fixed_transparency:
            p.blends[mode] = fixed_transparency_blend(
                p.real, p.cg, group_categories(p.semantics), p.probability,
                config.fixed_visibility, config.sigma, config.blend);
            break;
        }
        lap(("blend_" + mode_name(mode)).c_str());
      }

      if (p.flow.width() > 0) {
        io::write_flo(out.flow(t), p.flow);
        record(fr, "flow", out.flow(t));
      }
      io::write_pfm(out.depth(t), p.fused_depth);
      record(fr, "depth", out.depth(t));
      io::write_pfm(out.probmap(t), p.probability);
      record(fr, "probmap", out.probmap(t));
      for (const auto& [mode, blend] : p.blends) {
        io::write_frame_png(out.composite(mode, t), blend.composite.pixels());
        record(fr, "composite/" + mode_name(mode), out.composite(mode, t));
        io::write_pfm(out.alpha(mode, t), blend.alpha);
        record(fr, "alpha/" + mode_name(mode), out.alpha(mode, t));
      }
      lap("write");

      if (flow.has_flow && fs::exists(in.gt_depth(t))) {
        const DepthMap gt = io::read_pfm(in.gt_depth(t));
        fr.raw_depth_error =
            depth_error(p.raw_depth, gt, dims, p.divergence.point, config.evaluation);
        fr.fused_depth_error =
            depth_error(p.fused_depth, gt, dims, p.divergence.point, config.evaluation);
      }
      if (observer) observer(p);
    } catch (const DataError& e) {
      fr.ok = false;
      fr.error = e.what();
    } catch (const std::invalid_argument& e) {
      fr.ok = false;
      fr.error = e.what();
    }
    report.frames.push_back(std::move(fr));
  }

  report.total_milliseconds = ms_since(run_start);
  write_text(config.output / "manifest.json",
             json{{"schema", "omniocc.outputs/1"},
                  {"config_sha256", io::sha256_string(config_to_json(config))},
                  {"files", manifest_files}}
                     .dump(2) +
                 "\n");
  write_text(config.output / "report.json", report_to_json(report) + "\n");
  return report;
}

ModeMetrics mode_metrics(const SphericalFrame& real, const CgLayer& cg, const BlendResult& blend) {
  const int w = real.width();
  const int h = real.height();
  ScalarImage residual(w, h, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      residual(x, y) = luminance(blend.composite(x, y)) - luminance(real(x, y));
    }
  }
  ModeMetrics m;
  double alpha_sum = 0.0;
  double diff_sum = 0.0;
  double hf_sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!cg.covers(x, y)) continue;
      ++m.mask_pixels;
      alpha_sum += blend.alpha(x, y);
      const Rgb& c = blend.composite(x, y);
      const Rgb& r = real(x, y);
      diff_sum += (std::abs(c.r - r.r) + std::abs(c.g - r.g) + std::abs(c.b - r.b)) / 3.0;
      const int ym = std::max(y - 1, 0);
      const int yp = std::min(y + 1, h - 1);
      const double lap = residual((x + 1) % w, y) + residual((x + w - 1) % w, y) +
                         residual(x, ym) + residual(x, yp) - 4.0 * residual(x, y);
      hf_sum += lap * lap;
    }
  }
  if (m.mask_pixels > 0) {
    const double n = static_cast<double>(m.mask_pixels);
    m.mean_alpha = alpha_sum / n;
    m.mean_abs_difference = diff_sum / n;
    m.high_frequency_energy = hf_sum / n;
  }
  return m;
}

CompareReport compare_modes(const PipelineConfig& config, FrameRange range) {
  config.validate();
  CompareReport report;
  report.range = range;
  const synth::DatasetLayout in{config.dataset};
  const OutputLayout out{config.output};
  std::map<std::string, std::size_t> frames_per_mode;

  for (int t = range.first; t <= range.last; ++t) {
    const SphericalFrame real = io::read_frame_png(in.frame(t), t);
    const CgLayer cg = io::read_cg_layer(in.cg_color(t), in.cg_depth(t));
    const int w = real.width();
    const int h = real.height();
    RgbImage strip(w * static_cast<int>(config.modes.size()), h);
    int slot = 0;
    for (BlendMode mode : config.modes) {
      const fs::path composite_path = out.composite(mode, t);
      const fs::path alpha_path = out.alpha(mode, t);
      if (!fs::exists(composite_path) || !fs::exists(alpha_path)) {
        throw DataError("missing " + mode_name(mode) + " output for frame " + std::to_string(t));
      }
      BlendResult blend{io::read_frame_png(composite_path, t), io::read_pfm_dense(alpha_path)};
      const ModeMetrics m = mode_metrics(real, cg, blend);
      auto& agg = report.modes[mode_name(mode)];
      agg.mask_pixels += m.mask_pixels;
      agg.mean_alpha += m.mean_alpha;
      agg.mean_abs_difference += m.mean_abs_difference;
      agg.high_frequency_energy += m.high_frequency_energy;
      ++frames_per_mode[mode_name(mode)];
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) strip(slot * w + x, y) = blend.composite(x, y);
      }
      ++slot;
    }
    io::write_frame_png(out.strip(t), strip);
    report.strips.push_back(out.strip(t));
  }
  for (auto& [name, m] : report.modes) {
    const double n = static_cast<double>(frames_per_mode[name]);
    m.mean_alpha /= n;
    m.mean_abs_difference /= n;
    m.high_frequency_energy /= n;
  }

  json modes = json::object();
  std::ostringstream csv;
  csv << "mode,mask_pixels,mean_alpha,mean_abs_difference,high_frequency_energy\n";
  for (const auto& [name, m] : report.modes) {
    modes[name] = {{"mask_pixels", m.mask_pixels},
                   {"mean_alpha", m.mean_alpha},
                   {"mean_abs_difference", m.mean_abs_difference},
                   {"high_frequency_energy", m.high_frequency_energy}};
    csv << name << ',' << m.mask_pixels << ',' << m.mean_alpha << ',' << m.mean_abs_difference
        << ',' << m.high_frequency_energy << '\n';
  }
  const json doc{{"schema", "omniocc.compare/1"},
                 {"first", range.first},
                 {"last", range.last},
                 {"modes", modes}};
  write_text(config.output / "compare" / "metrics.json", doc.dump(2) + "\n");
  write_text(config.output / "compare" / "metrics.csv", csv.str());
  return report;
}

}  // namespace omniocc
