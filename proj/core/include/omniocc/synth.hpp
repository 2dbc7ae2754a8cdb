#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "omniocc/compositor.hpp"
#include "omniocc/depth.hpp"
#include "omniocc/flow.hpp"
#include "omniocc/semantics.hpp"
#include "omniocc/sphere_geometry.hpp"

namespace omniocc::synth {

enum class Shape { sphere, quad, billboard };

/// Analytic scene element. Quads span local x in [-size.x, size.x] and local
/// y in [-size.y, size.y] around `center`, with the local z axis as normal.
/// Billboards are quads whose normal faces the first camera position.
struct Primitive {
  Shape shape = Shape::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Quaterniond orientation = Eigen::Quaterniond::Identity();
  double radius = 1.0;
  Eigen::Vector2d half_size = Eigen::Vector2d::Ones();
  std::uint64_t texture_seed = 1;
  /// Feature size of the value-noise texture, metres.
  double texture_scale = 0.5;
  /// Relative modulation depth of the texture in [0, 1].
  double texture_contrast = 0.6;
  Rgb color{0.5, 0.5, 0.5};
  SemanticClass label = SemanticClass::building;
  /// CG primitives are only drawn into CG layers.
  bool cg = false;
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  std::vector<CameraPose> camera_path;
  FrameDims dims{256, 128};
  Rgb sky_color{0.55, 0.7, 0.9};
  /// Supersampling factor per axis for colour (depth and labels use the
  /// pixel-center ray).
  int supersample = 2;

  /// Throws ConfigError when the spec is unusable (bad dims, empty path,
  /// camera inside a primitive).
  void validate() const;
};

struct RenderedFrame {
  SphericalFrame frame;
  DepthMap depth;
  SemanticMap semantics;
};

/// Ray-cast equirectangular render of the non-CG primitives. Pixels without
/// a hit show the sky colour, carry the Sky label and have invalid depth.
/// Uncertainty is 0.05 inside regions and 0.85 on label boundaries.
RenderedFrame render_scene(const SceneSpec& spec, int frame_index);

/// Exact displacement from frame `from` to frame `to` for each pixel of
/// frame `from`, by re-projecting the hit point. Points occluded in `to` are
/// invalid; sky pixels move with the camera rotation only.
FlowField ground_truth_flow(const SceneSpec& spec, int from, int to);

/// Renders only the CG primitives: alpha 1 and valid depth where hit.
CgLayer make_cg_layer(const SceneSpec& spec, int frame_index);

/// Nearest hit along a world ray, ignoring or selecting CG primitives.
struct Hit {
  double distance = 0.0;
  std::size_t primitive = 0;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
};
std::optional<Hit> cast_ray(const SceneSpec& spec, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& direction, bool cg_layer);

/// Deterministic 3D value noise in [0, 1] (three octaves).
double value_noise(const Eigen::Vector3d& p, std::uint64_t seed);

// Scene files are JSON:
// {"schema": "omniocc.scene/1", "width": 512, "height": 256, "supersample": 2,
//  "sky_color": [r, g, b],
//  "primitives": [{"shape": "sphere"|"quad"|"billboard", "center": [x, y, z],
//                  "quaternion": [w, x, y, z], "radius": r, "half_size": [hx, hy],
//                  "texture_seed": n, "texture_scale": s, "texture_contrast": c,
//                  "color": [r, g, b], "label": "Building", "cg": false}, ...],
//  "camera_path": [{"index": 0, "position": [...], "quaternion": [...]}, ...]}
// Colours are linear RGB.
SceneSpec load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const SceneSpec& spec);

/// Dataset directory layout consumed by the pipeline.
struct DatasetLayout {
  std::filesystem::path root;

  std::filesystem::path frame(int i) const;
  std::filesystem::path labels(int i) const;
  std::filesystem::path uncertainty(int i) const;
  std::filesystem::path cg_color(int i) const;
  std::filesystem::path cg_depth(int i) const;
  std::filesystem::path gt_depth(int i) const;
  /// Backward ground-truth flow from frame i to frame i - 1.
  std::filesystem::path gt_flow(int i) const;
  std::filesystem::path poses() const { return root / "poses.json"; }
  std::filesystem::path scene() const { return root / "scene.json"; }
  std::filesystem::path manifest() const { return root / "dataset.json"; }
};

std::string frame_name(const std::string& stem, int index, const std::string& ext);

/// Renders every frame of the camera path into a dataset directory.
void write_dataset(const SceneSpec& spec, const std::filesystem::path& root);

/// Built-in scenes used by the tests and the `synth --preset` option.
///   "street":  forward motion at 0.5 m per frame past a textured building
///              wall (Simple), a tree (Complex) and a ground plane. CG spheres
///              sit behind the wall, behind the tree, against the sky and just
///              above the ground.
///   "wall":    camera translating toward a fronto-parallel wall.
SceneSpec preset_scene(const std::string& name, FrameDims dims, int frames);

}  // namespace omniocc::synth
