#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "dice/tomo.hpp"
#include "dice/types.hpp"

namespace dice {

enum class FilterKind { ram_lak, hann };

struct FilterSpec {
  FilterKind kind = FilterKind::ram_lak;
  double cutoff = 1.0;  // fraction of Nyquist, (0, 1]

  void validate() const {
    if (!(cutoff > 0.0 && cutoff <= 1.0)) throw numerical_error("filter cutoff must be in (0, 1]");
  }
};

namespace detail {

/// FFTW planning is not reentrant; execution on distinct arrays is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Frequency response of the band-limited ramp filter of length `padded`:
/// the DFT of the sampled spatial ramp kernel, then windowed. The DC bin is
/// O(1/padded) rather than zero; it carries the tail of the truncated kernel
/// and keeps the reconstructed mean.
inline std::vector<double> ramp_response(std::size_t padded, double spacing, const FilterSpec& f) {
  std::vector<double> kernel(padded, 0.0);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  kernel[0] = 1.0 / (4.0 * spacing * spacing);
  for (std::size_t i = 1; i < padded / 2; ++i) {
    if (i % 2 == 1) {
      const double v = -1.0 / (pi2 * double(i) * double(i) * spacing * spacing);
      kernel[i] = v;
      kernel[padded - i] = v;
    }
  }
  const std::size_t bins = padded / 2 + 1;
  std::vector<std::complex<double>> spec(bins);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(padded), kernel.data(),
                                          reinterpret_cast<fftw_complex*>(spec.data()),
                                          FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  std::vector<double> response(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    const double freq = double(i) / double(padded / 2);  // fraction of Nyquist
    double window = 0.0;
    if (freq <= f.cutoff) {
      window = f.kind == FilterKind::hann ? 0.5 * (1.0 + std::cos(std::numbers::pi * freq / f.cutoff))
                                          : 1.0;
    }
    response[i] = spec[i].real() * window;
  }
  return response;
}

/// Quadrature weight of each view over the half-period [0, pi).
inline std::vector<double> angle_weights(const std::vector<double>& angles) {
  const std::size_t n = angles.size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = i == 0 ? angles[n - 1] - std::numbers::pi : angles[i - 1];
    const double next = i + 1 == n ? angles[0] + std::numbers::pi : angles[i + 1];
    w[i] = 0.5 * (next - prev);
  }
  return w;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace detail

/// Ramp-filters every view in the frequency domain (zero padded to the next
/// power of two >= 2 * n_detectors). Output keeps the sinogram shape.
inline Sinogram ramp_filter(const Sinogram& sino, double detector_spacing, const FilterSpec& filter) {
  filter.validate();
  const std::size_t n = sino.n_detectors;
  const std::size_t padded = detail::next_pow2(2 * n);
  const std::size_t bins = padded / 2 + 1;
  const auto response = detail::ramp_response(padded, detector_spacing, filter);

  std::unique_ptr<double, detail::FftwFree> buf(
      static_cast<double*>(fftw_malloc(sizeof(double) * padded)));
  std::unique_ptr<fftw_complex, detail::FftwFree> spec(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(padded), buf.get(), spec.get(), FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(padded), spec.get(), buf.get(), FFTW_ESTIMATE);
  }

  Sinogram out(sino.n_angles, n);
  // Convolution sum times detector_spacing; 1/padded undoes the unnormalized inverse.
  const double norm = detector_spacing / double(padded);
  for (std::size_t a = 0; a < sino.n_angles; ++a) {
    const auto row = sino.row(a);
    std::fill(buf.get(), buf.get() + padded, 0.0);
    std::copy(row.begin(), row.end(), buf.get());
    fftw_execute(fwd);
    for (std::size_t i = 0; i < bins; ++i) {
      spec.get()[i][0] *= response[i];
      spec.get()[i][1] *= response[i];
    }
    fftw_execute(inv);
    auto dst = out.row(a);
    for (std::size_t d = 0; d < n; ++d) dst[d] = buf.get()[d] * norm;
  }
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  return out;
}

/// Filtered backprojection through the exact adjoint of forward_project.
/// Each view is weighted by its share of [0, pi), so a full uniform scan of
/// a constant object reproduces its value.
inline Image fbp(const Sinogram& sino, const Geometry& geom, const FilterSpec& filter = {}) {
  geom.validate();
  detail::check_sinogram(sino, geom);
  if (geom.n_angles() < 2) throw numerical_error("fbp: at least two views required");
  if (!all_finite(sino.values)) throw numerical_error("fbp: non-finite sinogram");

  Sinogram filtered = ramp_filter(sino, geom.detector_spacing, filter);
  const auto weights = detail::angle_weights(geom.angles);
  // back_project spreads a view with total weight pixel_size^2 / detector_spacing.
  const double scale = geom.detector_spacing / (geom.pixel_size * geom.pixel_size);
  for (std::size_t a = 0; a < filtered.n_angles; ++a)
    for (double& v : filtered.row(a)) v *= weights[a] * scale;
  return back_project(filtered, geom);
}

}  // namespace dice
