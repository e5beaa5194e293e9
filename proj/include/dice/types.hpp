#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <thread>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dice {

/// Thrown when array shapes or geometries do not agree.
struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown for non-finite data, degenerate geometry, or solver breakdown.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when an external agent cannot be reached or misbehaves.
struct transport_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thread cap from DICE_NUM_THREADS; defaults to the hardware concurrency.
inline std::size_t max_threads() {
  if (const char* env = std::getenv("DICE_NUM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// 2-D raster, row-major, row 0 at the top.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  double pixel_size = 1.0;
  std::vector<double> values;

  Image() = default;
  Image(std::size_t w, std::size_t h, double px = 1.0, double fill = 0.0)
      : width(w), height(h), pixel_size(px), values(w * h, fill) {}

  std::size_t size() const { return values.size(); }
  double& operator()(std::size_t row, std::size_t col) { return values[row * width + col]; }
  double operator()(std::size_t row, std::size_t col) const { return values[row * width + col]; }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

/// Parallel-beam acquisition geometry. Detector array is centered on the
/// rotation axis; bin k has center (k - (n-1)/2) * detector_spacing.
struct Geometry {
  std::size_t n_detectors = 0;
  double detector_spacing = 1.0;
  std::vector<double> angles;  // radians, strictly increasing in [0, pi)
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  double pixel_size = 1.0;

  std::size_t n_angles() const { return angles.size(); }
  std::size_t sinogram_size() const { return n_angles() * n_detectors; }

  /// Throws numerical_error when the invariants do not hold.
  void validate() const {
    if (n_detectors < 1) throw numerical_error("geometry: n_detectors must be >= 1");
    if (angles.empty()) throw numerical_error("geometry: at least one angle required");
    if (image_width < 1 || image_height < 1) throw numerical_error("geometry: empty image");
    if (!(detector_spacing > 0) || !(pixel_size > 0))
      throw numerical_error("geometry: spacings must be positive");
    for (std::size_t i = 0; i < angles.size(); ++i) {
      if (!(angles[i] >= 0.0 && angles[i] < std::numbers::pi))
        throw numerical_error("geometry: angle outside [0, pi)");
      if (i > 0 && !(angles[i] > angles[i - 1]))
        throw numerical_error("geometry: angles must be strictly increasing");
    }
  }

  /// True when every pixel footprint falls on the detector at every angle.
  bool covers_image() const {
    const double half_w = 0.5 * static_cast<double>(image_width) * pixel_size;
    const double half_h = 0.5 * static_cast<double>(image_height) * pixel_size;
    const double half_span = 0.5 * static_cast<double>(n_detectors) * detector_spacing;
    return half_span >= std::hypot(half_w, half_h);
  }
};

/// `n_angles` uniformly spaced views over [0, pi) for a square `n` x `n` image.
inline Geometry parallel_geometry(std::size_t n, std::size_t n_angles, std::size_t n_detectors = 0,
                                  double pixel_size = 1.0) {
  Geometry g;
  g.image_width = g.image_height = n;
  g.pixel_size = pixel_size;
  g.detector_spacing = pixel_size;
  if (n_detectors == 0) {
    const double diag = std::hypot(double(n), double(n));
    n_detectors = static_cast<std::size_t>(std::ceil(diag)) + 2;
  }
  g.n_detectors = n_detectors;
  g.angles.resize(n_angles);
  for (std::size_t i = 0; i < n_angles; ++i)
    g.angles[i] = std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_angles);
  return g;
}

/// Projection data indexed (angle, detector), row-major.
struct Sinogram {
  std::size_t n_angles = 0;
  std::size_t n_detectors = 0;
  std::vector<double> values;

  Sinogram() = default;
  Sinogram(std::size_t angles, std::size_t detectors, double fill = 0.0)
      : n_angles(angles), n_detectors(detectors), values(angles * detectors, fill) {}
  explicit Sinogram(const Geometry& g) : Sinogram(g.n_angles(), g.n_detectors) {}

  std::span<double> row(std::size_t a) { return {values.data() + a * n_detectors, n_detectors}; }
  std::span<const double> row(std::size_t a) const {
    return {values.data() + a * n_detectors, n_detectors};
  }
  double& operator()(std::size_t a, std::size_t d) { return values[a * n_detectors + d]; }
  double operator()(std::size_t a, std::size_t d) const { return values[a * n_detectors + d]; }

  bool matches(const Geometry& g) const {
    return n_angles == g.n_angles() && n_detectors == g.n_detectors &&
           values.size() == g.sinogram_size();
  }
  bool same_shape(const Sinogram& o) const {
    return n_angles == o.n_angles && n_detectors == o.n_detectors;
  }
};

/// Per-view observed flags; true = observed.
class AngularMask {
 public:
  AngularMask() = default;
  explicit AngularMask(std::vector<bool> observed) : observed_(std::move(observed)) {
    if (observed_count() == 0) throw shape_error("angular mask: at least one observed view required");
  }

  static AngularMask all_observed(std::size_t n) { return AngularMask(std::vector<bool>(n, true)); }

  /// Observe the views whose angle (in degrees) lies in [lo_deg, hi_deg).
  static AngularMask from_degrees(const Geometry& g, double lo_deg, double hi_deg) {
    std::vector<bool> obs(g.n_angles());
    for (std::size_t i = 0; i < g.n_angles(); ++i) {
      const double deg = g.angles[i] * 180.0 / std::numbers::pi;
      obs[i] = deg >= lo_deg - 1e-9 && deg < hi_deg - 1e-9;
    }
    return AngularMask(std::move(obs));
  }

  std::size_t size() const { return observed_.size(); }
  bool observed(std::size_t i) const { return observed_[i]; }
  const std::vector<bool>& flags() const { return observed_; }
  std::size_t observed_count() const {
    return static_cast<std::size_t>(std::count(observed_.begin(), observed_.end(), true));
  }
  std::size_t missing_count() const { return size() - observed_count(); }

 private:
  std::vector<bool> observed_;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double diff_norm(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace detail
}  // namespace dice
