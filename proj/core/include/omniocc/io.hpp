#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "omniocc/compositor.hpp"
#include "omniocc/depth.hpp"
#include "omniocc/flow.hpp"
#include "omniocc/image.hpp"
#include "omniocc/semantics.hpp"
#include "omniocc/sphere_geometry.hpp"

namespace omniocc::io {

namespace fs = std::filesystem;

// All readers throw DataError on missing or malformed files.

// PFM: "Pf" header, "width height", scale (negative = little-endian), then
// bottom-to-top rows of float32. Non-finite samples and samples flagged
// invalid are stored as NaN and read back as invalid.
void write_pfm(const fs::path& path, const MaskedField& field);
MaskedField read_pfm(const fs::path& path);
void write_pfm(const fs::path& path, const ScalarImage& image);
ScalarImage read_pfm_dense(const fs::path& path);

// Middlebury .flo: "PIEH" tag (float 202021.25), int32 width, int32 height,
// then row-major interleaved float32 (u, v), little-endian. Invalid vectors
// are written as the format's unknown-flow value (1e9) and read back invalid.
void write_flo(const fs::path& path, const FlowField& flow);
FlowField read_flo(const fs::path& path);

// PNG frames are 8-bit sRGB; in memory they are linear-light RGB in [0, 1].
SphericalFrame read_frame_png(const fs::path& path, int timestamp_index = 0);
void write_frame_png(const fs::path& path, const RgbImage& image);
/// CG colour as RGBA PNG (colour sRGB, alpha linear coverage).
RgbaImage read_rgba_png(const fs::path& path);
void write_rgba_png(const fs::path& path, const RgbaImage& image);

/// CG layer: RGBA PNG plus PFM depth with matching dimensions.
CgLayer read_cg_layer(const fs::path& color_png, const fs::path& depth_pfm);
void write_cg_layer(const fs::path& color_png, const fs::path& depth_pfm, const CgLayer& layer);

// Label maps: 8-bit palette PNG, palette index = class code (Building = 0 ...
// Unknown = 8). Plain 8-bit grayscale PNGs are accepted with the gray value
// as the code. Uncertainty: 8-bit grayscale, g = value / 255 clamped to
// (1e-4, 1 - 1e-4).
void write_label_png(const fs::path& path, const Image<std::uint8_t>& labels);
Image<std::uint8_t> read_label_png(const fs::path& path);
void write_uncertainty_png(const fs::path& path, const ScalarImage& uncertainty);
ScalarImage read_uncertainty_png(const fs::path& path);
SemanticMap read_semantic_map(const fs::path& labels_png, const fs::path& uncertainty_png);

/// RGB palette used for label PNGs, indexed by class code.
const std::array<std::array<std::uint8_t, 3>, kSemanticClassCount>& label_palette();

// Pose manifest (JSON):
//   {"schema": "omniocc.poses/1",
//    "frames": [{"index": 0, "position": [x, y, z], "quaternion": [w, x, y, z]}, ...]}
// Positions are metres in the world frame (+z up); quaternions are
// world-from-camera and are normalized on load when within 1e-6 of unit norm.
void write_pose_manifest(const fs::path& path, const std::vector<CameraPose>& poses);
std::vector<CameraPose> read_pose_manifest(const fs::path& path);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);
std::string sha256_string(const std::string& data);

}  // namespace omniocc::io
