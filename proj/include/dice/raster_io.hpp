#pragma once

// Raster files are a JSON header plus a raw payload of little-endian f32,
// row-major, exactly rows * cols values:
//
//   {"kind": "image" | "sinogram", "shape": [rows, cols], "pixel_size": 1.0,
//    "dtype": "f32le", "data": "<payload path relative to the header>",
//    "angles": [...radians...]            (sinograms)
//    "detector_spacing": 1.0              (sinograms, optional)
//    "observed": [true, false, ...]       (sinograms, optional view mask)
//    "image_shape": [rows, cols]          (sinograms, reconstruction grid)}

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dice/types.hpp"

namespace dice::io {

/// Malformed or unreadable raster file.
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Raster {
  std::string kind;  // "image" or "sinogram"
  std::size_t rows = 0;
  std::size_t cols = 0;
  double pixel_size = 1.0;
  std::optional<double> detector_spacing;
  std::vector<double> angles;
  std::optional<std::vector<bool>> observed;
  std::optional<std::array<std::size_t, 2>> image_shape;
  std::vector<float> data;
};

namespace fs = std::filesystem;

inline fs::path payload_path_for(const fs::path& header) {
  fs::path p = header;
  p.replace_extension(".f32");
  return p;
}

inline void write_raster(const fs::path& header_path, const Raster& r) {
  if (r.data.size() != r.rows * r.cols) throw format_error("raster payload size mismatch");
  if (header_path.has_parent_path()) fs::create_directories(header_path.parent_path());
  const fs::path payload = payload_path_for(header_path);

  nlohmann::ordered_json h;
  h["kind"] = r.kind;
  h["shape"] = {r.rows, r.cols};
  h["pixel_size"] = r.pixel_size;
  h["dtype"] = "f32le";
  h["data"] = payload.filename().string();
  if (r.kind == "sinogram") {
    h["angles"] = r.angles;
    if (r.detector_spacing) h["detector_spacing"] = *r.detector_spacing;
    if (r.observed) h["observed"] = *r.observed;
    if (r.image_shape) h["image_shape"] = *r.image_shape;
  }
  std::ofstream hs(header_path, std::ios::binary | std::ios::trunc);
  if (!hs) throw format_error("cannot write " + header_path.string());
  hs << h.dump(2) << '\n';

  std::vector<std::uint8_t> bytes(4 * r.data.size());
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const auto u = std::bit_cast<std::uint32_t>(r.data[i]);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  std::ofstream ps(payload, std::ios::binary | std::ios::trunc);
  if (!ps) throw format_error("cannot write " + payload.string());
  ps.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!ps) throw format_error("short write to " + payload.string());
}

inline Raster read_raster(const fs::path& header_path) {
  std::ifstream hs(header_path, std::ios::binary);
  if (!hs) throw format_error("cannot open " + header_path.string());
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(header_path.string() + ": " + e.what());
  }

  Raster r;
  try {
    r.kind = h.at("kind").get<std::string>();
    if (r.kind != "image" && r.kind != "sinogram") throw format_error("unknown raster kind " + r.kind);
    const auto& shape = h.at("shape");
    if (!shape.is_array() || shape.size() != 2) throw format_error("shape must be [rows, cols]");
    const auto rows = shape[0].get<std::int64_t>();
    const auto cols = shape[1].get<std::int64_t>();
    if (rows <= 0 || cols <= 0) throw format_error("shape must be positive");
    r.rows = static_cast<std::size_t>(rows);
    r.cols = static_cast<std::size_t>(cols);
    if (h.at("dtype").get<std::string>() != "f32le") throw format_error("dtype must be f32le");
    r.pixel_size = h.value("pixel_size", 1.0);
    if (h.contains("angles")) r.angles = h["angles"].get<std::vector<double>>();
    if (h.contains("detector_spacing")) r.detector_spacing = h["detector_spacing"].get<double>();
    if (h.contains("observed")) r.observed = h["observed"].get<std::vector<bool>>();
    if (h.contains("image_shape")) r.image_shape = h["image_shape"].get<std::array<std::size_t, 2>>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error(header_path.string() + ": " + e.what());
  }
  if (r.kind == "sinogram" && r.angles.size() != r.rows)
    throw format_error(header_path.string() + ": sinogram needs one angle per row");
  if (r.observed && r.observed->size() != r.rows)
    throw format_error(header_path.string() + ": observed mask length mismatch");

  const fs::path payload = header_path.parent_path() / h.at("data").get<std::string>();
  std::ifstream ps(payload, std::ios::binary | std::ios::ate);
  if (!ps) throw format_error("cannot open " + payload.string());
  const auto size = static_cast<std::size_t>(ps.tellg());
  if (size != 4 * r.rows * r.cols)
    throw format_error(payload.string() + ": expected " + std::to_string(4 * r.rows * r.cols) +
                       " bytes, found " + std::to_string(size));
  ps.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  ps.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  r.data.resize(r.rows * r.cols);
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= std::uint32_t(bytes[4 * i + b]) << (8 * b);
    r.data[i] = std::bit_cast<float>(u);
  }
  return r;
}

// ---- typed helpers -----------------------------------------------------

inline Raster to_raster(const Image& img) {
  Raster r;
  r.kind = "image";
  r.rows = img.height;
  r.cols = img.width;
  r.pixel_size = img.pixel_size;
  r.data.assign(img.values.begin(), img.values.end());
  return r;
}

inline Raster to_raster(const Sinogram& s, const Geometry& g,
                        const std::optional<AngularMask>& mask = std::nullopt) {
  Raster r;
  r.kind = "sinogram";
  r.rows = s.n_angles;
  r.cols = s.n_detectors;
  r.pixel_size = g.pixel_size;
  r.detector_spacing = g.detector_spacing;
  r.angles = g.angles;
  if (mask) r.observed = mask->flags();
  r.image_shape = std::array<std::size_t, 2>{g.image_height, g.image_width};
  r.data.assign(s.values.begin(), s.values.end());
  return r;
}

inline Image image_from(const Raster& r) {
  if (r.kind != "image") throw format_error("expected an image raster, found " + r.kind);
  Image img(r.cols, r.rows, r.pixel_size);
  std::copy(r.data.begin(), r.data.end(), img.values.begin());
  if (!all_finite(img.values)) throw format_error("image contains non-finite values");
  return img;
}

inline Sinogram sinogram_from(const Raster& r) {
  if (r.kind != "sinogram") throw format_error("expected a sinogram raster, found " + r.kind);
  Sinogram s(r.rows, r.cols);
  std::copy(r.data.begin(), r.data.end(), s.values.begin());
  if (!all_finite(s.values)) throw format_error("sinogram contains non-finite values");
  return s;
}

/// Geometry recorded in a sinogram header.
inline Geometry geometry_from(const Raster& r) {
  if (r.kind != "sinogram") throw format_error("geometry needs a sinogram raster");
  if (!r.image_shape) throw format_error("sinogram header lacks image_shape");
  const std::size_t image_height = (*r.image_shape)[0];
  const std::size_t image_width = (*r.image_shape)[1];
  Geometry g;
  g.n_detectors = r.cols;
  g.angles = r.angles;
  g.pixel_size = r.pixel_size;
  g.detector_spacing = r.detector_spacing.value_or(r.pixel_size);
  g.image_width = image_width;
  g.image_height = image_height;
  return g;
}

}  // namespace dice::io
