#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "dice/types.hpp"

namespace dice {

/// Linear map from phantom values to reporting units: hu = slope * v + intercept.
struct HuConvention {
  double slope = 1000.0;
  double intercept = -1000.0;

  double to_hu(double v) const { return slope * v + intercept; }
  /// Differences only pick up the slope.
  double scale_error(double err) const { return std::abs(slope) * err; }
};

namespace detail {

inline void check_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.values.size() != b.values.size())
    throw shape_error(std::string(what) + ": image shapes differ");
}

inline double dynamic_range(const Image& ref) {
  const auto [lo, hi] = std::minmax_element(ref.values.begin(), ref.values.end());
  return *hi - *lo;
}

}  // namespace detail

inline double rmse(const Image& x, const Image& ref) {
  detail::check_same(x, ref, "rmse");
  if (x.values.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.values[i] - ref.values[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(x.size()));
}

/// RMSE restricted to pixels where `region` is true.
inline double rmse(const Image& x, const Image& ref, const std::vector<bool>& region) {
  detail::check_same(x, ref, "rmse");
  if (region.size() != x.size()) throw shape_error("rmse: region size mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!region[i]) continue;
    const double d = x.values[i] - ref.values[i];
    s += d * d;
    ++count;
  }
  return count ? std::sqrt(s / static_cast<double>(count)) : 0.0;
}

/// Pixels whose centers lie within `fraction` of the inscribed circle radius.
inline std::vector<bool> inscribed_disk(const Image& img, double fraction = 1.0) {
  std::vector<bool> mask(img.size());
  const double cx = 0.5 * static_cast<double>(img.width);
  const double cy = 0.5 * static_cast<double>(img.height);
  const double r = fraction * 0.5 * static_cast<double>(std::min(img.width, img.height));
  for (std::size_t i = 0; i < img.height; ++i)
    for (std::size_t j = 0; j < img.width; ++j) {
      const double dx = static_cast<double>(j) + 0.5 - cx;
      const double dy = static_cast<double>(i) + 0.5 - cy;
      mask[i * img.width + j] = dx * dx + dy * dy <= r * r;
    }
  return mask;
}

/// 20 log10(peak / rmse); peak defaults to the reference dynamic range.
/// Returns +infinity for identical images.
inline double psnr(const Image& x, const Image& ref, std::optional<double> peak = std::nullopt) {
  const double p = peak.value_or(detail::dynamic_range(ref));
  if (!(p > 0.0)) throw numerical_error("psnr: reference has zero dynamic range");
  const double e = rmse(x, ref);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(p / e);
}

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  std::optional<double> range;  // defaults to the reference dynamic range
};

/// Mean structural similarity over all window positions that fit inside the
/// image, Gaussian-weighted.
inline double ssim(const Image& x, const Image& ref, const SsimParams& params = {}) {
  detail::check_same(x, ref, "ssim");
  const std::size_t w = params.window;
  if (x.width < w || x.height < w) throw shape_error("ssim: image smaller than window");
  const double L = params.range.value_or(detail::dynamic_range(ref));
  if (!(L > 0.0)) throw numerical_error("ssim: reference has zero dynamic range");
  const double c1 = (params.k1 * L) * (params.k1 * L);
  const double c2 = (params.k2 * L) * (params.k2 * L);

  std::vector<double> g(w);
  double gsum = 0.0;
  const double mid = 0.5 * static_cast<double>(w - 1);
  for (std::size_t i = 0; i < w; ++i) {
    const double d = static_cast<double>(i) - mid;
    g[i] = std::exp(-d * d / (2.0 * params.sigma * params.sigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  const std::size_t out_w = x.width - w + 1;
  const std::size_t out_h = x.height - w + 1;
  double total = 0.0;
  for (std::size_t r = 0; r < out_h; ++r)
    for (std::size_t c = 0; c < out_w; ++c) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < w; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double k = g[i] * g[j];
          const double a = x(r + i, c + j);
          const double b = ref(r + i, c + j);
          ma += k * a;
          mb += k * b;
          saa += k * a * a;
          sbb += k * b * b;
          sab += k * a * b;
        }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return total / static_cast<double>(out_w * out_h);
}

}  // namespace dice
