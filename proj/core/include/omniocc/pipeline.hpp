#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "omniocc/compositor.hpp"
#include "omniocc/depth.hpp"
#include "omniocc/flow.hpp"
#include "omniocc/semantics.hpp"
#include "omniocc/sphere_geometry.hpp"

namespace omniocc {

struct DepthStageParams {
  TriangulationParams triangulation;
  DivergenceParams divergence;
  /// Half extent of the divergence search region around the pose-derived
  /// motion direction, degrees.
  double search_half_extent_deg = 10.0;
  /// Refine the detected point with refine_motion_direction; the refined
  /// point is kept only if it stays inside the search region.
  bool epipolar_refinement = true;
  /// Temporal window N (frames t-N+1 .. t).
  int fusion_frames = 5;
  /// Re-measure fused samples from the newest camera center.
  bool compensated_fusion = true;
  /// Sigmoid scale of P_f, 1/m.
  double k = 1.0;
  double p_unknown = 0.5;
};

struct EvaluationParams {
  double min_depth = 2.0;
  double max_depth = 20.0;
  /// Pixels closer than this to the focus of expansion are not scored.
  double foe_exclusion_deg = 5.0;
};

/// Every field defaults to the documented value; see README for the JSON form.
struct PipelineConfig {
  std::filesystem::path dataset;
  std::filesystem::path output;
  /// Empty disables the flow cache.
  std::filesystem::path cache_dir;
  bool use_cache = true;
  bool use_ground_truth_flow = false;
  int max_in_flight = 4;
  std::vector<BlendMode> modes{BlendMode::visibility, BlendMode::alpha,
                               BlendMode::fixed_transparency};

  FlowParams flow;
  DepthStageParams depth;
  double sigma = default_sigma();
  VisibilityParams visibility = VisibilityParams::defaults();
  FixedVisibilityParams fixed_visibility = FixedVisibilityParams::defaults();
  BlendConfig blend;
  EvaluationParams evaluation;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

/// Parses a config file ("schema": "omniocc.config/1"). Keys are optional and
/// override the defaults; unknown keys are rejected. Throws ConfigError.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& json_text);
std::string config_to_json(const PipelineConfig& config);

/// Inclusive frame range; `last < first` is empty.
struct FrameRange {
  int first = 0;
  int last = -1;
  bool empty() const { return last < first; }
  int size() const { return empty() ? 0 : last - first + 1; }
};

struct DepthErrorStats {
  std::size_t count = 0;
  double median_relative = 0.0;
  double mean_relative = 0.0;
};

struct StageTiming {
  std::string stage;
  double milliseconds = 0.0;
};

struct FrameReport {
  int index = 0;
  bool ok = true;
  std::string error;
  bool flow_cache_hit = false;
  std::vector<StageTiming> timings;
  std::optional<DivergenceResult> divergence;
  std::optional<DepthErrorStats> raw_depth_error;
  std::optional<DepthErrorStats> fused_depth_error;
  std::map<std::string, std::string> outputs;
};

inline constexpr int kReportSchemaVersion = 1;

struct EvalReport {
  int schema_version = kReportSchemaVersion;
  FrameRange range;
  std::vector<FrameReport> frames;
  double total_milliseconds = 0.0;

  std::size_t failed_frames() const;
};

std::string report_to_json(const EvalReport& report);

/// In-memory products of one frame, handed to the observer of run_pipeline.
struct FrameProducts {
  int index = 0;
  SphericalFrame real;
  CgLayer cg;
  SemanticMap semantics;
  CameraPose pose;
  /// Backward flow t -> t-1 (empty for the first frame of the dataset).
  FlowField flow;
  DivergenceResult divergence;
  DepthMap raw_depth;
  DepthMap fused_depth;
  ProbabilityMap probability;
  std::map<BlendMode, BlendResult> blends;
};

using FrameObserver = std::function<void(const FrameProducts&)>;

/// Number of frames listed in the dataset's pose manifest.
int dataset_frame_count(const std::filesystem::path& dataset);

/// Relative depth error against a reference over pixels with a valid
/// estimate, reference depth in [min_depth, max_depth] and angular distance
/// from `foe` above the exclusion radius.
DepthErrorStats depth_error(const DepthMap& estimate, const DepthMap& reference, FrameDims dims,
                            const AngularPoint& foe, const EvaluationParams& params);

/// Depth of frame t from the backward flow t -> t-1: divergence search
/// around the pose-derived motion direction, then triangulation.
struct DepthEstimate {
  DivergenceResult divergence;
  TriangulationResult triangulation;
};
DepthEstimate estimate_depth(const FlowField& flow_curr_to_prev, FrameDims dims,
                             const CameraPose& pose_prev, const CameraPose& pose_curr,
                             const DepthStageParams& params);

/// Writes flow/, depth/, probmap/, composite/<mode>/, alpha/<mode>/, a
/// manifest with checksums and report.json under config.output. Missing
/// inputs are recorded per frame and the run continues. The observer, when
/// set, is called in frame order. Throws ConfigError on a bad config.
EvalReport run_pipeline(const PipelineConfig& config, FrameRange range,
                        const FrameObserver& observer = {});

struct ModeMetrics {
  std::size_t mask_pixels = 0;
  double mean_alpha = 0.0;
  double mean_abs_difference = 0.0;
  /// Mean squared Laplacian of the luminance residual (composite - real)
  /// inside the mask.
  double high_frequency_energy = 0.0;
};

struct CompareReport {
  FrameRange range;
  /// Aggregated over the range, keyed by mode name.
  std::map<std::string, ModeMetrics> modes;
  std::vector<std::filesystem::path> strips;
};

/// Reads the pipeline outputs of every configured mode, writes one
/// side-by-side strip per frame under compare/ plus metrics.json and
/// metrics.csv. Throws DataError when a mode's output is missing.
CompareReport compare_modes(const PipelineConfig& config, FrameRange range);

ModeMetrics mode_metrics(const SphericalFrame& real, const CgLayer& cg, const BlendResult& blend);

}  // namespace omniocc
