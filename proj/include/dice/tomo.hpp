#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "dice/types.hpp"

namespace dice {
namespace detail {

/// Visits every nonzero entry A[(angle, bin), pixel] of the system matrix for
/// one view as visit(pixel_index, bin_index, weight).
///
/// Distance-driven model: the view marches along image rows when
/// |cos| >= |sin| and along columns otherwise. In each line, pixel footprints
/// are mapped onto the detector axis s = x cos + y sin and intersected with
/// the detector bins; the weight is
///   (path length through the line) * (overlap length) / detector_spacing.
/// Every pixel's weights over the bins sum to pixel_size^2 / detector_spacing
/// whenever its footprint lies on the detector, for every angle.
template <class Visit>
void for_each_footprint(const Geometry& g, std::size_t angle, Visit&& visit) {
  const double theta = g.angles[angle];
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double ps = g.pixel_size;
  const double ds = g.detector_spacing;
  const std::size_t W = g.image_width;
  const std::size_t H = g.image_height;
  const auto n = static_cast<std::ptrdiff_t>(g.n_detectors);
  const double e0 = -0.5 * static_cast<double>(n) * ds;

  const bool row_march = std::abs(c) >= std::abs(s);
  const double trig = row_march ? std::abs(c) : std::abs(s);
  // Work in detector-bin units: bin k spans [k, k + 1).
  const double width = ps * trig / ds;
  const double scale = ps / trig;  // path length per line; times overlap in bins
  const bool single_step = width <= 1.0;
  const std::size_t lines = row_march ? H : W;
  const std::size_t len = row_march ? W : H;

  for (std::size_t line = 0; line < lines; ++line) {
    double start;
    std::ptrdiff_t base, stride;
    if (row_march) {
      const double y = (0.5 * static_cast<double>(H - 1) - static_cast<double>(line)) * ps;
      start = y * s - 0.5 * static_cast<double>(W) * ps * trig;
      base = static_cast<std::ptrdiff_t>(line * W + (c >= 0 ? 0 : W - 1));
      stride = c >= 0 ? 1 : -1;
    } else {
      const double x = (static_cast<double>(line) - 0.5 * static_cast<double>(W - 1)) * ps;
      start = x * c - 0.5 * static_cast<double>(H) * ps * trig;
      base = static_cast<std::ptrdiff_t>((H - 1) * W + line);
      stride = -static_cast<std::ptrdiff_t>(W);
    }
    const double u_start = (start - e0) / ds;

    for (std::size_t j = 0; j < len; ++j) {
      const double u0 = u_start + static_cast<double>(j) * width;
      const double u1 = u_start + static_cast<double>(j + 1) * width;
      const auto pixel = static_cast<std::size_t>(base + static_cast<std::ptrdiff_t>(j) * stride);
      auto k = static_cast<std::ptrdiff_t>(u0);
      if (static_cast<double>(k) > u0) --k;  // floor
      const double edge = static_cast<double>(k + 1);
      if (single_step) {
        // Footprint covers bin k and possibly part of bin k + 1; the second
        // weight is zero when it does not.
        const double w0 = scale * (std::min(u1, edge) - u0);
        const double w1 = scale * std::max(u1 - edge, 0.0);
        if (k >= 0 && k + 1 < n) {
          visit(pixel, static_cast<std::size_t>(k), w0);
          visit(pixel, static_cast<std::size_t>(k + 1), w1);
        } else {
          if (k >= 0 && k < n) visit(pixel, static_cast<std::size_t>(k), w0);
          if (k + 1 >= 0 && k + 1 < n) visit(pixel, static_cast<std::size_t>(k + 1), w1);
        }
        continue;
      }
      double lo = u0;
      for (; lo < u1; ++k) {
        const double hi = std::min(u1, static_cast<double>(k + 1));
        if (k >= 0 && k < n && hi > lo) visit(pixel, static_cast<std::size_t>(k), scale * (hi - lo));
        lo = hi;
      }
    }
  }
}

inline void check_image(const Image& img, const Geometry& g) {
  if (img.width != g.image_width || img.height != g.image_height ||
      img.values.size() != img.width * img.height)
    throw shape_error("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                      " does not match geometry " + std::to_string(g.image_width) + "x" +
                      std::to_string(g.image_height));
}

inline void check_sinogram(const Sinogram& y, const Geometry& g) {
  if (!y.matches(g))
    throw shape_error("sinogram " + std::to_string(y.n_angles) + "x" +
                      std::to_string(y.n_detectors) + " does not match geometry " +
                      std::to_string(g.n_angles()) + "x" + std::to_string(g.n_detectors));
}

}  // namespace detail

/// Line integrals A x. Views are processed in order and accumulated
/// sequentially, so results are reproducible bit for bit.
inline Sinogram forward_project(const Image& image, const Geometry& geom) {
  detail::check_image(image, geom);
  Sinogram out(geom);
  for (std::size_t a = 0; a < geom.n_angles(); ++a) {
    auto row = out.row(a);
    detail::for_each_footprint(geom, a, [&](std::size_t p, std::size_t k, double w) {
      row[k] += w * image.values[p];
    });
  }
  return out;
}

/// Exact matrix adjoint A^T of forward_project.
inline Image back_project(const Sinogram& sino, const Geometry& geom) {
  detail::check_sinogram(sino, geom);
  Image out(geom.image_width, geom.image_height, geom.pixel_size);
  for (std::size_t a = 0; a < geom.n_angles(); ++a) {
    const auto row = sino.row(a);
    detail::for_each_footprint(geom, a, [&](std::size_t p, std::size_t k, double w) {
      out.values[p] += w * row[k];
    });
  }
  return out;
}

/// Zeroes the views the mask marks as missing.
inline Sinogram apply_mask(const Sinogram& sino, const AngularMask& mask) {
  if (mask.size() != sino.n_angles)
    throw shape_error("mask length " + std::to_string(mask.size()) + " != n_angles " +
                      std::to_string(sino.n_angles));
  Sinogram out = sino;
  for (std::size_t a = 0; a < out.n_angles; ++a)
    if (!mask.observed(a))
      for (double& v : out.row(a)) v = 0.0;
  return out;
}

}  // namespace dice
