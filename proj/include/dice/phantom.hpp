#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "dice/types.hpp"

namespace dice {

/// Ellipse in normalized coordinates: the image spans [-1, 1] on both axes,
/// y pointing up. `rotation_deg` is counter-clockwise.
struct Ellipse {
  double value;
  double semi_x;
  double semi_y;
  double center_x;
  double center_y;
  double rotation_deg;

  bool contains(double x, double y) const {
    const double phi = rotation_deg * std::numbers::pi / 180.0;
    const double dx = x - center_x;
    const double dy = y - center_y;
    const double u = dx * std::cos(phi) + dy * std::sin(phi);
    const double v = -dx * std::sin(phi) + dy * std::cos(phi);
    return (u * u) / (semi_x * semi_x) + (v * v) / (semi_y * semi_y) <= 1.0;
  }
};

struct EllipseScene {
  std::vector<Ellipse> ellipses;
  std::size_t n = 0;
  std::uint64_t seed = 0;

  /// Sum of the values of every ellipse containing (x, y).
  double value_at(double x, double y) const {
    double v = 0.0;
    for (const auto& e : ellipses)
      if (e.contains(x, y)) v += e.value;
    return v;
  }
};

/// Modified (Toft) Shepp-Logan ellipses, values in [0, 1]. The symmetric
/// variant mirrors the small asymmetric ellipse pair at the bottom.
inline std::vector<Ellipse> shepp_logan_ellipses(bool symmetric = false) {
  std::vector<Ellipse> e = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };
  if (symmetric) {
    // Mirror the ellipse at -0.08 and drop the lopsided one at 0.06.
    e[9] = {0.1, 0.0460, 0.0230, 0.08, -0.605, 0.0};
    e[3].semi_x = e[2].semi_x;
    e[3].semi_y = e[2].semi_y;
  }
  return e;
}

/// Samples the scene at pixel centers of an n x n grid.
inline Image rasterize(const EllipseScene& scene, double pixel_size = 1.0) {
  const std::size_t n = scene.n;
  Image img(n, n, pixel_size);
  const double half = 0.5 * static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double y = (half - 0.5 - static_cast<double>(r)) / half;
    for (std::size_t c = 0; c < n; ++c) {
      const double x = (static_cast<double>(c) + 0.5 - half) / half;
      img(r, c) = scene.value_at(x, y);
    }
  }
  return img;
}

inline Image shepp_logan(std::size_t n, bool symmetric = false, double pixel_size = 1.0) {
  if (n < 16) throw shape_error("shepp_logan: n must be >= 16");
  return rasterize(EllipseScene{shepp_logan_ellipses(symmetric), n, 0}, pixel_size);
}

/// Baggage-like random scene: a container ellipse filled with a few
/// nonnegative objects, all inside the inscribed circle.
inline EllipseScene random_ellipse_scene(std::size_t n, std::uint64_t seed, std::size_t objects = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  EllipseScene scene;
  scene.n = n;
  scene.seed = seed;
  const double outer_x = uniform(0.6, 0.85);
  const double outer_y = uniform(0.5, 0.85);
  scene.ellipses.push_back({uniform(0.15, 0.3), outer_x, outer_y, 0.0, 0.0, uniform(-30.0, 30.0)});
  for (std::size_t i = 0; i < objects; ++i) {
    const double a = uniform(0.05, 0.25);
    const double b = uniform(0.05, 0.25);
    const double rad = uniform(0.0, 0.85 * std::min(outer_x, outer_y) - std::max(a, b));
    const double ang = uniform(0.0, 2.0 * std::numbers::pi);
    scene.ellipses.push_back({uniform(0.1, 0.6), a, b, std::max(rad, 0.0) * std::cos(ang),
                              std::max(rad, 0.0) * std::sin(ang), uniform(0.0, 180.0)});
  }
  return scene;
}

}  // namespace dice
