#include "omniocc/synth.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numbers>

#include "omniocc/errors.hpp"
#include "omniocc/io.hpp"
#include "omniocc/parallel.hpp"

namespace omniocc::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kUncertaintyInterior = 0.05;
constexpr double kUncertaintyBoundary = 0.85;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(x));
  h = splitmix64(h ^ static_cast<std::uint64_t>(y));
  h = splitmix64(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double noise_octave(const Eigen::Vector3d& p, std::uint64_t seed) {
  const Eigen::Vector3d f(std::floor(p.x()), std::floor(p.y()), std::floor(p.z()));
  const auto ix = static_cast<std::int64_t>(f.x());
  const auto iy = static_cast<std::int64_t>(f.y());
  const auto iz = static_cast<std::int64_t>(f.z());
  const double tx = smooth(p.x() - f.x());
  const double ty = smooth(p.y() - f.y());
  const double tz = smooth(p.z() - f.z());
  double acc = 0.0;
  for (int dz = 0; dz <= 1; ++dz) {
    for (int dy = 0; dy <= 1; ++dy) {
      for (int dx = 0; dx <= 1; ++dx) {
        const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
        acc += w * lattice(ix + dx, iy + dy, iz + dz, seed);
      }
    }
  }
  return acc;
}

Eigen::Quaterniond billboard_orientation(const Primitive& prim, const SceneSpec& spec) {
  Eigen::Vector3d normal = spec.camera_path.front().position - prim.center;
  normal.z() = 0.0;
  if (normal.norm() < 1e-9) normal = Eigen::Vector3d::UnitX();
  normal.normalize();
  const Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d x_axis = up.cross(normal).normalized();
  Eigen::Matrix3d basis;
  basis.col(0) = x_axis;
  basis.col(1) = up;
  basis.col(2) = normal;
  return Eigen::Quaterniond(basis);
}

Eigen::Quaterniond orientation_of(const Primitive& prim, const SceneSpec& spec) {
  return prim.shape == Shape::billboard ? billboard_orientation(prim, spec) : prim.orientation;
}

std::optional<double> intersect(const Primitive& prim, const Eigen::Quaterniond& orientation,
                                const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
  if (prim.shape == Shape::sphere) {
    const Eigen::Vector3d oc = o - prim.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - prim.radius * prim.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = -b - s;
    if (t0 > 1e-9) return t0;
    const double t1 = -b + s;
    if (t1 > 1e-9) return t1;
    return std::nullopt;
  }
  const Eigen::Vector3d n = orientation * Eigen::Vector3d::UnitZ();
  const double denom = d.dot(n);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = (prim.center - o).dot(n) / denom;
  if (!(t > 1e-9)) return std::nullopt;
  const Eigen::Vector3d local = orientation.conjugate() * (o + t * d - prim.center);
  if (std::abs(local.x()) > prim.half_size.x() || std::abs(local.y()) > prim.half_size.y()) {
    return std::nullopt;
  }
  return t;
}

Rgb shade(const Primitive& prim, const Eigen::Quaterniond& orientation, const Eigen::Vector3d& point) {
  const Eigen::Vector3d local = orientation.conjugate() * (point - prim.center);
  const double n = value_noise(local / prim.texture_scale, prim.texture_seed);
  const double factor = 1.0 - prim.texture_contrast + 2.0 * prim.texture_contrast * n;
  return {clamp01(prim.color.r * factor), clamp01(prim.color.g * factor),
          clamp01(prim.color.b * factor)};
}

Eigen::Vector3d world_ray(const SceneSpec& spec, const CameraPose& pose, double x, double y) {
  return pose.to_world(pixel_to_direction({x, y}, spec.dims)).normalized();
}

const CameraPose& pose_at(const SceneSpec& spec, int index) {
  if (index < 0 || index >= static_cast<int>(spec.camera_path.size())) {
    throw std::out_of_range("frame index outside the camera path");
  }
  return spec.camera_path[index];
}

Eigen::Vector3d vec3(const json& j) {
  const auto a = j.get<std::array<double, 3>>();
  return {a[0], a[1], a[2]};
}

Rgb rgb(const json& j) {
  const auto a = j.get<std::array<double, 3>>();
  return {a[0], a[1], a[2]};
}

Eigen::Quaterniond quat(const json& j) {
  const auto a = j.get<std::array<double, 4>>();
  return Eigen::Quaterniond(a[0], a[1], a[2], a[3]).normalized();
}

std::string shape_name(Shape s) {
  switch (s) {
    case Shape::sphere: return "sphere";
    case Shape::quad: return "quad";
    case Shape::billboard: return "billboard";
  }
  return "sphere";
}

Shape shape_from_name(const std::string& s) {
  if (s == "sphere") return Shape::sphere;
  if (s == "quad") return Shape::quad;
  if (s == "billboard") return Shape::billboard;
  throw ConfigError("unknown primitive shape: " + s);
}

}  // namespace

double value_noise(const Eigen::Vector3d& p, std::uint64_t seed) {
  return 0.5 * noise_octave(p, seed) + 0.3 * noise_octave(2.0 * p, seed + 1) +
         0.2 * noise_octave(4.0 * p, seed + 2);
}

void SceneSpec::validate() const {
  try {
    dims.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (camera_path.empty()) throw ConfigError("scene: camera path is empty");
  if (supersample < 1) throw ConfigError("scene: supersample must be >= 1");
  for (const auto& prim : primitives) {
    if (prim.shape == Shape::sphere && !(prim.radius > 0.0)) {
      throw ConfigError("scene: sphere radius must be positive");
    }
    if (!(prim.texture_scale > 0.0)) throw ConfigError("scene: texture_scale must be positive");
    for (const auto& pose : camera_path) {
      if (prim.shape == Shape::sphere && (pose.position - prim.center).norm() <= prim.radius) {
        throw ConfigError("scene: camera path passes through a sphere");
      }
    }
  }
}

std::optional<Hit> cast_ray(const SceneSpec& spec, const Eigen::Vector3d& origin,
                            const Eigen::Vector3d& direction, bool cg_layer) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
    const auto& prim = spec.primitives[i];
    if (prim.cg != cg_layer) continue;
    const auto t = intersect(prim, orientation_of(prim, spec), origin, direction);
    if (t && (!best || *t < best->distance)) best = Hit{*t, i, origin + *t * direction};
  }
  return best;
}

RenderedFrame render_scene(const SceneSpec& spec, int frame_index) {
  spec.validate();
  const CameraPose& pose = pose_at(spec, frame_index);
  const int w = spec.dims.width;
  const int h = spec.dims.height;
  const int ss = spec.supersample;
  RgbImage color(w, h);
  DepthMap depth(w, h);
  Image<std::uint8_t> labels(w, h, static_cast<std::uint8_t>(SemanticClass::sky));

  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d center_ray = world_ray(spec, pose, x + 0.5, y + 0.5);
      if (const auto hit = cast_ray(spec, pose.position, center_ray, false)) {
        depth.values(x, y) = hit->distance;
        depth.valid(x, y) = 1;
        labels(x, y) = static_cast<std::uint8_t>(spec.primitives[hit->primitive].label);
      }
      Rgb acc;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          const Eigen::Vector3d ray =
              world_ray(spec, pose, x + (sx + 0.5) / ss, y + (sy + 0.5) / ss);
          Rgb c = spec.sky_color;
          if (const auto hit = cast_ray(spec, pose.position, ray, false)) {
            const auto& prim = spec.primitives[hit->primitive];
            c = shade(prim, orientation_of(prim, spec), hit->point);
          }
          acc.r += c.r;
          acc.g += c.g;
          acc.b += c.b;
        }
      }
      const double n = ss * ss;
      color(x, y) = {acc.r / n, acc.g / n, acc.b / n};
    }
  });

  ScalarImage uncertainty(w, h, kUncertaintyInterior);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto l = labels(x, y);
      const bool boundary = labels((x + 1) % w, y) != l || labels((x + w - 1) % w, y) != l ||
                            (y > 0 && labels(x, y - 1) != l) || (y + 1 < h && labels(x, y + 1) != l);
      if (boundary) uncertainty(x, y) = kUncertaintyBoundary;
    }
  }
  return {SphericalFrame(std::move(color), frame_index), std::move(depth),
          SemanticMap(std::move(labels), std::move(uncertainty))};
}

FlowField ground_truth_flow(const SceneSpec& spec, int from, int to) {
  spec.validate();
  const CameraPose& src = pose_at(spec, from);
  const CameraPose& dst = pose_at(spec, to);
  const int w = spec.dims.width;
  const int h = spec.dims.height;
  FlowField flow(w, h);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector2d p = pixel_center(x, y);
      const Eigen::Vector3d ray = world_ray(spec, src, p.x(), p.y());
      Eigen::Vector3d target_dir;
      if (const auto hit = cast_ray(spec, src.position, ray, false)) {
        const Eigen::Vector3d to_point = hit->point - dst.position;
        const double dist = to_point.norm();
        const auto blocker = cast_ray(spec, dst.position, to_point / dist, false);
        if (!blocker || blocker->distance < dist * (1.0 - 1e-7) - 1e-7) {
          flow.valid(x, y) = 0;
          continue;
        }
        target_dir = dst.to_camera(to_point);
      } else {
        target_dir = dst.to_camera(ray);
      }
      const Eigen::Vector2d q = direction_to_pixel(target_dir, spec.dims);
      Eigen::Vector2d u = q - p;
      if (u.x() >= w / 2.0) u.x() -= w;
      if (u.x() < -w / 2.0) u.x() += w;
      flow.u(x, y) = u;
    }
  });
  return flow;
}

CgLayer make_cg_layer(const SceneSpec& spec, int frame_index) {
  spec.validate();
  const CameraPose& pose = pose_at(spec, frame_index);
  const int w = spec.dims.width;
  const int h = spec.dims.height;
  CgLayer layer{RgbaImage(w, h), DepthMap(w, h)};
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d ray = world_ray(spec, pose, x + 0.5, y + 0.5);
      const auto hit = cast_ray(spec, pose.position, ray, true);
      if (!hit) continue;
      const auto& prim = spec.primitives[hit->primitive];
      const Rgb c = shade(prim, orientation_of(prim, spec), hit->point);
      layer.color(x, y) = {c.r, c.g, c.b, 1.0};
      layer.depth.values(x, y) = hit->distance;
      layer.depth.valid(x, y) = 1;
    }
  });
  return layer;
}

SceneSpec load_scene(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scene file: " + path.string());
  SceneSpec spec;
  try {
    const json doc = json::parse(in);
    if (doc.value("schema", std::string{}) != "omniocc.scene/1") {
      throw ConfigError("unsupported scene schema in " + path.string());
    }
    spec.dims = {doc.at("width").get<int>(), doc.at("height").get<int>()};
    spec.supersample = doc.value("supersample", 2);
    if (doc.contains("sky_color")) spec.sky_color = rgb(doc.at("sky_color"));
    for (const auto& p : doc.at("primitives")) {
      Primitive prim;
      prim.shape = shape_from_name(p.at("shape").get<std::string>());
      prim.center = vec3(p.at("center"));
      if (p.contains("quaternion")) prim.orientation = quat(p.at("quaternion"));
      prim.radius = p.value("radius", 1.0);
      if (p.contains("half_size")) {
        const auto hs = p.at("half_size").get<std::array<double, 2>>();
        prim.half_size = {hs[0], hs[1]};
      }
      prim.texture_seed = p.value("texture_seed", std::uint64_t{1});
      prim.texture_scale = p.value("texture_scale", 0.5);
      prim.texture_contrast = p.value("texture_contrast", 0.6);
      if (p.contains("color")) prim.color = rgb(p.at("color"));
      const auto label = semantic_class_from_string(p.value("label", std::string{"Building"}));
      if (!label) throw ConfigError("unknown semantic label in " + path.string());
      prim.label = *label;
      prim.cg = p.value("cg", false);
      spec.primitives.push_back(prim);
    }
    for (const auto& c : doc.at("camera_path")) {
      spec.camera_path.emplace_back(c.at("index").get<int>(), vec3(c.at("position")),
                                    quat(c.at("quaternion")));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed scene file " + path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

void save_scene(const fs::path& path, const SceneSpec& spec) {
  json prims = json::array();
  for (const auto& p : spec.primitives) {
    prims.push_back({{"shape", shape_name(p.shape)},
                     {"center", {p.center.x(), p.center.y(), p.center.z()}},
                     {"quaternion",
                      {p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z()}},
                     {"radius", p.radius},
                     {"half_size", {p.half_size.x(), p.half_size.y()}},
                     {"texture_seed", p.texture_seed},
                     {"texture_scale", p.texture_scale},
                     {"texture_contrast", p.texture_contrast},
                     {"color", {p.color.r, p.color.g, p.color.b}},
                     {"label", std::string(to_string(p.label))},
                     {"cg", p.cg}});
  }
  json path_json = json::array();
  for (const auto& c : spec.camera_path) {
    path_json.push_back(
        {{"index", c.index},
         {"position", {c.position.x(), c.position.y(), c.position.z()}},
         {"quaternion", {c.orientation.w(), c.orientation.x(), c.orientation.y(), c.orientation.z()}}});
  }
  const json doc{{"schema", "omniocc.scene/1"},
                 {"width", spec.dims.width},
                 {"height", spec.dims.height},
                 {"supersample", spec.supersample},
                 {"sky_color", {spec.sky_color.r, spec.sky_color.g, spec.sky_color.b}},
                 {"primitives", prims},
                 {"camera_path", path_json}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write scene file: " + path.string());
  out << doc.dump(2) << '\n';
}

std::string frame_name(const std::string& stem, int index, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%06d", index);
  return stem + buf + ext;
}

fs::path DatasetLayout::frame(int i) const { return root / "frames" / frame_name("frame", i, ".png"); }
fs::path DatasetLayout::labels(int i) const { return root / "labels" / frame_name("label", i, ".png"); }
fs::path DatasetLayout::uncertainty(int i) const {
  return root / "uncertainty" / frame_name("uncertainty", i, ".png");
}
fs::path DatasetLayout::cg_color(int i) const { return root / "cg" / frame_name("cg", i, ".png"); }
fs::path DatasetLayout::cg_depth(int i) const { return root / "cg_depth" / frame_name("cg", i, ".pfm"); }
fs::path DatasetLayout::gt_depth(int i) const {
  return root / "gt_depth" / frame_name("depth", i, ".pfm");
}
fs::path DatasetLayout::gt_flow(int i) const { return root / "gt_flow" / frame_name("flow", i, ".flo"); }

void write_dataset(const SceneSpec& spec, const fs::path& root) {
  spec.validate();
  const DatasetLayout layout{root};
  fs::create_directories(root);
  save_scene(layout.scene(), spec);
  io::write_pose_manifest(layout.poses(), spec.camera_path);
  json files = json::object();
  auto record = [&files, &root](const fs::path& p) {
    files[fs::relative(p, root).generic_string()] = io::sha256_file(p);
  };
  record(layout.poses());
  for (int i = 0; i < static_cast<int>(spec.camera_path.size()); ++i) {
    const RenderedFrame r = render_scene(spec, i);
    io::write_frame_png(layout.frame(i), r.frame.pixels());
    io::write_label_png(layout.labels(i), r.semantics.labels);
    io::write_uncertainty_png(layout.uncertainty(i), r.semantics.uncertainty);
    io::write_pfm(layout.gt_depth(i), r.depth);
    io::write_cg_layer(layout.cg_color(i), layout.cg_depth(i), make_cg_layer(spec, i));
    for (const auto& p : {layout.frame(i), layout.labels(i), layout.uncertainty(i),
                          layout.gt_depth(i), layout.cg_color(i), layout.cg_depth(i)}) {
      record(p);
    }
    if (i > 0) {
      io::write_flo(layout.gt_flow(i), ground_truth_flow(spec, i, i - 1));
      record(layout.gt_flow(i));
    }
  }
  const json manifest{{"schema", "omniocc.dataset/1"},
                      {"frame_count", spec.camera_path.size()},
                      {"width", spec.dims.width},
                      {"height", spec.dims.height},
                      {"files", files}};
  std::ofstream out(layout.manifest());
  out << manifest.dump(2) << '\n';
}

SceneSpec preset_scene(const std::string& name, FrameDims dims, int frames) {
  SceneSpec spec;
  spec.dims = dims;
  // Yaw by pi: world +x (direction of travel) appears at the image center.
  const Eigen::Quaterniond facing_forward(0.0, 0.0, 0.0, 1.0);
  const Eigen::Quaterniond wall_left =
      Eigen::Quaterniond(Eigen::AngleAxisd(std::numbers::pi / 2.0, Eigen::Vector3d::UnitX()));
  const Eigen::Quaterniond wall_right =
      Eigen::Quaterniond(Eigen::AngleAxisd(-std::numbers::pi / 2.0, Eigen::Vector3d::UnitX()));
  const Eigen::Quaterniond wall_ahead =
      Eigen::Quaterniond(Eigen::AngleAxisd(-std::numbers::pi / 2.0, Eigen::Vector3d::UnitY()));

  auto ground = [](double z) {
    Primitive g;
    g.shape = Shape::quad;
    g.center = {20.0, 0.0, z};
    g.half_size = {200.0, 200.0};
    g.texture_seed = 11;
    g.texture_scale = 0.3;
    g.texture_contrast = 0.6;
    g.color = {0.35, 0.3, 0.25};
    g.label = SemanticClass::ground;
    return g;
  };

  if (name == "street") {
    spec.primitives.push_back(ground(-1.6));
    Primitive left;  // building facade along the left of the road
    left.shape = Shape::quad;
    left.center = {17.5, 6.0, 3.2};
    left.orientation = wall_left;
    left.half_size = {22.5, 4.8};
    left.texture_seed = 21;
    left.texture_scale = 0.4;
    left.texture_contrast = 0.7;
    left.color = {0.16, 0.13, 0.11};
    left.label = SemanticClass::building;
    spec.primitives.push_back(left);

    Primitive right = left;  // further building on the right
    right.center = {35.0, -11.0, 3.0};
    right.orientation = wall_right;
    right.half_size = {15.0, 4.6};
    right.texture_seed = 22;
    right.color = {0.3, 0.25, 0.22};
    spec.primitives.push_back(right);

    Primitive ahead = left;  // distant building across the road
    ahead.center = {60.0, 0.0, 4.0};
    ahead.orientation = wall_ahead;
    ahead.half_size = {6.0, 12.0};
    ahead.texture_seed = 23;
    ahead.color = {0.25, 0.22, 0.2};
    spec.primitives.push_back(ahead);

    Primitive crown;  // tree foliage
    crown.shape = Shape::sphere;
    crown.center = {10.0, -5.0, 2.4};
    crown.radius = 1.8;
    crown.texture_seed = 31;
    crown.texture_scale = 0.15;
    crown.texture_contrast = 0.8;
    crown.color = {0.08, 0.25, 0.06};
    crown.label = SemanticClass::tree;
    spec.primitives.push_back(crown);

    Primitive trunk;
    trunk.shape = Shape::billboard;
    trunk.center = {10.0, -5.0, -0.3};
    trunk.half_size = {0.25, 1.3};
    trunk.texture_seed = 32;
    trunk.texture_scale = 0.1;
    trunk.color = {0.2, 0.12, 0.06};
    trunk.label = SemanticClass::tree_trunk;
    spec.primitives.push_back(trunk);

    Primitive hidden;  // CG object behind the facade
    hidden.shape = Shape::sphere;
    hidden.center = {20.0, 10.0, 1.0};
    hidden.radius = 2.5;
    hidden.texture_seed = 41;
    hidden.texture_contrast = 0.1;
    hidden.color = {0.9, 0.6, 0.3};
    hidden.cg = true;
    spec.primitives.push_back(hidden);

    Primitive floating = hidden;  // CG object against the sky
    floating.center = {25.0, -2.0, 3.5};
    floating.radius = 1.2;
    floating.texture_seed = 42;
    floating.color = {0.8, 0.55, 0.35};
    spec.primitives.push_back(floating);

    Primitive resting = hidden;  // CG object just above the ground
    resting.center = {14.0, -2.5, -0.6};
    resting.radius = 0.6;
    resting.texture_seed = 43;
    resting.color = {0.75, 0.6, 0.4};
    spec.primitives.push_back(resting);

    Primitive behind_tree = hidden;  // CG object seen through the foliage
    behind_tree.center = {16.0, -9.0, 2.4};
    behind_tree.radius = 1.5;
    behind_tree.texture_seed = 44;
    behind_tree.color = {0.85, 0.5, 0.4};
    spec.primitives.push_back(behind_tree);

    for (int i = 0; i < frames; ++i) {
      spec.camera_path.emplace_back(i, Eigen::Vector3d(0.5 * i, 0.0, 0.0), facing_forward);
    }
  } else if (name == "wall") {
    spec.primitives.push_back(ground(-1.6));
    Primitive wall;
    wall.shape = Shape::quad;
    wall.center = {10.0, 0.0, 0.0};
    wall.orientation = wall_ahead;
    wall.half_size = {40.0, 40.0};
    wall.texture_seed = 51;
    wall.texture_scale = 0.4;
    wall.texture_contrast = 0.7;
    wall.color = {0.3, 0.25, 0.2};
    wall.label = SemanticClass::building;
    spec.primitives.push_back(wall);
    for (int i = 0; i < frames; ++i) {
      spec.camera_path.emplace_back(i, Eigen::Vector3d(0.5 * i, 0.0, 0.0), facing_forward);
    }
  } else {
    throw ConfigError("unknown preset scene: " + name);
  }
  spec.validate();
  return spec;
}

}  // namespace omniocc::synth
