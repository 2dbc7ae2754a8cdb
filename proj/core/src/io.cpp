#include "omniocc/io.hpp"

#include <png.h>
#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <nlohmann/json.hpp>
#include <sstream>

#include "omniocc/errors.hpp"

namespace omniocc::io {

namespace {

using json = nlohmann::json;

constexpr float kFloTag = 202021.25f;
constexpr float kFloUnknown = 1e9f;

template <typename T>
T byteswap_value(T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  std::reverse(bytes.begin(), bytes.end());
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) value = byteswap_value(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_value(std::istream& in, bool little_endian, const fs::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw DataError("truncated file: " + path.string());
  }
  const bool host_little = std::endian::native == std::endian::little;
  if (host_little != little_endian) value = byteswap_value(value);
  return value;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  return in;
}

// ---------------------------------------------------------------------------
// PNG via libpng

enum class PngLayout { rgb, rgba, gray, index };

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

RawPng read_png(const fs::path& path, PngLayout layout) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialisation failed");
  }
  RawPng raw;
  std::vector<png_bytep> rows;
  volatile bool bad_layout = false;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("malformed PNG: " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  switch (layout) {
    case PngLayout::index:
      if (!((color == PNG_COLOR_TYPE_PALETTE || color == PNG_COLOR_TYPE_GRAY) && depth == 8)) {
        bad_layout = true;
      }
      break;
    case PngLayout::rgb:
    case PngLayout::rgba:
      if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
      if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
      if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
      if (depth == 16) png_set_strip_16(png);
      if (layout == PngLayout::rgb) {
        png_set_strip_alpha(png);
      } else {
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_GRAY ||
            color == PNG_COLOR_TYPE_PALETTE) {
          png_set_filler(png, 0xFF, PNG_FILLER_AFTER);
        }
      }
      break;
    case PngLayout::gray:
      if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
      if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
      if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
      if (depth == 16) png_set_strip_16(png);
      png_set_strip_alpha(png);
      break;
  }
  if (!bad_layout) {
    png_read_update_info(png, info);
    raw.width = static_cast<int>(png_get_image_width(png, info));
    raw.height = static_cast<int>(png_get_image_height(png, info));
    raw.channels = png_get_channels(png, info);
    raw.data.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
    rows.resize(raw.height);
    for (int y = 0; y < raw.height; ++y) {
      rows[y] = raw.data.data() + static_cast<std::size_t>(y) * raw.width * raw.channels;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (bad_layout) throw DataError("label PNG must be 8-bit palette or grayscale: " + path.string());
  return raw;
}

void write_png(const fs::path& path, const RawPng& raw, bool palette) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialisation failed");
  }
  std::vector<png_bytep> rows(raw.height);
  std::array<png_color, kSemanticClassCount> colors{};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to write PNG: " + path.string());
  }
  png_init_io(png, file.get());
  int color_type = PNG_COLOR_TYPE_GRAY;
  if (palette) {
    color_type = PNG_COLOR_TYPE_PALETTE;
  } else if (raw.channels == 3) {
    color_type = PNG_COLOR_TYPE_RGB;
  } else if (raw.channels == 4) {
    color_type = PNG_COLOR_TYPE_RGBA;
  }
  png_set_IHDR(png, info, raw.width, raw.height, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (palette) {
    for (int i = 0; i < kSemanticClassCount; ++i) {
      colors[i] = {label_palette()[i][0], label_palette()[i][1], label_palette()[i][2]};
    }
    png_set_PLTE(png, info, colors.data(), kSemanticClassCount);
  }
  png_write_info(png, info);
  for (int y = 0; y < raw.height; ++y) {
    rows[y] = const_cast<png_bytep>(raw.data.data()) +
              static_cast<std::size_t>(y) * raw.width * raw.channels;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::uint8_t unit_to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(clamp01(v) * 255.0), 0L, 255L));
}

}  // namespace

// ---------------------------------------------------------------------------
// PFM

void write_pfm(const fs::path& path, const MaskedField& field) {
  auto out = open_out(path);
  out << "Pf\n" << field.width() << ' ' << field.height() << "\n-1.0\n";
  for (int y = field.height() - 1; y >= 0; --y) {
    for (int x = 0; x < field.width(); ++x) {
      const float v = field.is_valid(x, y) ? static_cast<float>(field.values(x, y))
                                           : std::numeric_limits<float>::quiet_NaN();
      write_le(out, v);
    }
  }
  if (!out) throw DataError("failed to write " + path.string());
}

void write_pfm(const fs::path& path, const ScalarImage& image) {
  MaskedField field(image.width(), image.height());
  field.values = image;
  field.valid.fill(1);
  write_pfm(path, field);
}

MaskedField read_pfm(const fs::path& path) {
  auto in = open_in(path);
  std::string magic;
  int width = 0;
  int height = 0;
  double scale = 0.0;
  if (!(in >> magic >> width >> height >> scale) || magic != "Pf" || width <= 0 || height <= 0 ||
      scale == 0.0) {
    throw DataError("not a single-channel PFM: " + path.string());
  }
  in.get();  // single whitespace byte before the raster
  MaskedField field(width, height);
  const bool little = scale < 0.0;
  for (int y = height - 1; y >= 0; --y) {
    for (int x = 0; x < width; ++x) {
      const float v = read_value<float>(in, little, path);
      if (std::isfinite(v)) {
        field.values(x, y) = v;
        field.valid(x, y) = 1;
      }
    }
  }
  return field;
}

ScalarImage read_pfm_dense(const fs::path& path) {
  MaskedField field = read_pfm(path);
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    if (!field.valid[i]) throw DataError("unexpected non-finite sample in " + path.string());
  }
  return field.values;
}

// ---------------------------------------------------------------------------
// Middlebury flow

void write_flo(const fs::path& path, const FlowField& flow) {
  auto out = open_out(path);
  write_le(out, kFloTag);
  write_le(out, static_cast<std::int32_t>(flow.width()));
  write_le(out, static_cast<std::int32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      const bool ok = flow.is_valid(x, y);
      write_le(out, ok ? static_cast<float>(flow.u(x, y).x()) : kFloUnknown);
      write_le(out, ok ? static_cast<float>(flow.u(x, y).y()) : kFloUnknown);
    }
  }
  if (!out) throw DataError("failed to write " + path.string());
}

FlowField read_flo(const fs::path& path) {
  auto in = open_in(path);
  if (read_value<float>(in, true, path) != kFloTag) {
    throw DataError("bad .flo tag: " + path.string());
  }
  const auto width = read_value<std::int32_t>(in, true, path);
  const auto height = read_value<std::int32_t>(in, true, path);
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    throw DataError("bad .flo dimensions: " + path.string());
  }
  FlowField flow(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const float u = read_value<float>(in, true, path);
      const float v = read_value<float>(in, true, path);
      if (!std::isfinite(u) || !std::isfinite(v) || std::abs(u) >= kFloUnknown ||
          std::abs(v) >= kFloUnknown) {
        flow.valid(x, y) = 0;
        continue;
      }
      flow.u(x, y) = {u, v};
    }
  }
  return flow;
}

// ---------------------------------------------------------------------------
// Frames, CG layers and semantic maps

SphericalFrame read_frame_png(const fs::path& path, int timestamp_index) {
  const RawPng raw = read_png(path, PngLayout::rgb);
  RgbImage image(raw.width, raw.height);
  for (std::size_t i = 0; i < image.size(); ++i) {
    image[i] = {srgb_byte_to_linear(raw.data[3 * i]), srgb_byte_to_linear(raw.data[3 * i + 1]),
                srgb_byte_to_linear(raw.data[3 * i + 2])};
  }
  try {
    return SphericalFrame(std::move(image), timestamp_index);
  } catch (const std::invalid_argument& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_frame_png(const fs::path& path, const RgbImage& image) {
  RawPng raw{image.width(), image.height(), 3, {}};
  raw.data.reserve(image.size() * 3);
  for (const Rgb& c : image.pixels()) {
    raw.data.push_back(linear_to_srgb_byte(c.r));
    raw.data.push_back(linear_to_srgb_byte(c.g));
    raw.data.push_back(linear_to_srgb_byte(c.b));
  }
  write_png(path, raw, false);
}

RgbaImage read_rgba_png(const fs::path& path) {
  const RawPng raw = read_png(path, PngLayout::rgba);
  RgbaImage image(raw.width, raw.height);
  for (std::size_t i = 0; i < image.size(); ++i) {
    image[i] = {srgb_byte_to_linear(raw.data[4 * i]), srgb_byte_to_linear(raw.data[4 * i + 1]),
                srgb_byte_to_linear(raw.data[4 * i + 2]), raw.data[4 * i + 3] / 255.0};
  }
  return image;
}

void write_rgba_png(const fs::path& path, const RgbaImage& image) {
  RawPng raw{image.width(), image.height(), 4, {}};
  raw.data.reserve(image.size() * 4);
  for (const Rgba& c : image.pixels()) {
    raw.data.push_back(linear_to_srgb_byte(c.r));
    raw.data.push_back(linear_to_srgb_byte(c.g));
    raw.data.push_back(linear_to_srgb_byte(c.b));
    raw.data.push_back(unit_to_byte(c.a));
  }
  write_png(path, raw, false);
}

CgLayer read_cg_layer(const fs::path& color_png, const fs::path& depth_pfm) {
  CgLayer layer{read_rgba_png(color_png), read_pfm(depth_pfm)};
  layer.validate();
  return layer;
}

void write_cg_layer(const fs::path& color_png, const fs::path& depth_pfm, const CgLayer& layer) {
  write_rgba_png(color_png, layer.color);
  write_pfm(depth_pfm, layer.depth);
}

const std::array<std::array<std::uint8_t, 3>, kSemanticClassCount>& label_palette() {
  static const std::array<std::array<std::uint8_t, 3>, kSemanticClassCount> palette{{
      {128, 0, 0},      // Building
      {0, 192, 0},      // Grass
      {64, 0, 128},     // Car
      {128, 64, 0},     // Ground
      {128, 64, 128},   // Road
      {128, 128, 128},  // Sky
      {128, 128, 0},    // Tree
      {64, 32, 0},      // TreeTrunk
      {0, 0, 0},        // Unknown
  }};
  return palette;
}

void write_label_png(const fs::path& path, const Image<std::uint8_t>& labels) {
  RawPng raw{labels.width(), labels.height(), 1,
             std::vector<std::uint8_t>(labels.pixels().begin(), labels.pixels().end())};
  for (auto& v : raw.data) v = std::min<std::uint8_t>(v, kSemanticClassCount - 1);
  write_png(path, raw, true);
}

Image<std::uint8_t> read_label_png(const fs::path& path) {
  const RawPng raw = read_png(path, PngLayout::index);
  Image<std::uint8_t> labels(raw.width, raw.height);
  std::copy(raw.data.begin(), raw.data.end(), labels.pixels().begin());
  return labels;
}

void write_uncertainty_png(const fs::path& path, const ScalarImage& uncertainty) {
  RawPng raw{uncertainty.width(), uncertainty.height(), 1, {}};
  raw.data.reserve(uncertainty.size());
  for (double g : uncertainty.pixels()) raw.data.push_back(unit_to_byte(g));
  write_png(path, raw, false);
}

ScalarImage read_uncertainty_png(const fs::path& path) {
  const RawPng raw = read_png(path, PngLayout::gray);
  ScalarImage g(raw.width, raw.height);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = clamp_uncertainty(raw.data[i] / 255.0);
  return g;
}

SemanticMap read_semantic_map(const fs::path& labels_png, const fs::path& uncertainty_png) {
  auto labels = read_label_png(labels_png);
  auto g = read_uncertainty_png(uncertainty_png);
  if (!labels.same_shape(g)) throw DataError("label and uncertainty maps differ in size");
  return SemanticMap(std::move(labels), std::move(g));
}

// ---------------------------------------------------------------------------
// Pose manifest

void write_pose_manifest(const fs::path& path, const std::vector<CameraPose>& poses) {
  json frames = json::array();
  for (const auto& p : poses) {
    frames.push_back({{"index", p.index},
                      {"position", {p.position.x(), p.position.y(), p.position.z()}},
                      {"quaternion",
                       {p.orientation.w(), p.orientation.x(), p.orientation.y(), p.orientation.z()}}});
  }
  auto out = open_out(path);
  out << std::setprecision(17) << json{{"schema", "omniocc.poses/1"}, {"frames", frames}}.dump(2)
      << '\n';
}

std::vector<CameraPose> read_pose_manifest(const fs::path& path) {
  auto in = open_in(path);
  std::vector<CameraPose> poses;
  try {
    const json doc = json::parse(in);
    if (doc.at("schema").get<std::string>() != "omniocc.poses/1") {
      throw DataError("unsupported pose manifest schema in " + path.string());
    }
    for (const auto& f : doc.at("frames")) {
      const auto pos = f.at("position").get<std::array<double, 3>>();
      const auto q = f.at("quaternion").get<std::array<double, 4>>();
      Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
      if (std::abs(quat.norm() - 1.0) > 1e-6) {
        throw DataError("non-unit quaternion in " + path.string());
      }
      quat.normalize();
      poses.emplace_back(f.at("index").get<int>(), Eigen::Vector3d(pos[0], pos[1], pos[2]), quat);
    }
  } catch (const json::exception& e) {
    throw DataError("malformed pose manifest " + path.string() + ": " + e.what());
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Checksums

namespace {

struct DigestDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("SHA-256 initialisation failed");
    }
  }
  void update(const char* data, std::size_t size) { EVP_DigestUpdate(ctx_.get(), data, size); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len);
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) {
      out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return out.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, DigestDeleter> ctx_;
};

}  // namespace

std::string sha256_file(const fs::path& path) {
  auto in = open_in(path);
  Sha256 sha;
  std::array<char, 1 << 16> buffer{};
  while (in.read(buffer.data(), buffer.size()) || in.gcount() > 0) {
    sha.update(buffer.data(), static_cast<std::size_t>(in.gcount()));
  }
  return sha.hex();
}

std::string sha256_string(const std::string& data) {
  Sha256 sha;
  sha.update(data.data(), data.size());
  return sha.hex();
}

}  // namespace omniocc::io
