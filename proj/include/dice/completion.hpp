#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <variant>
#include <vector>

#include "dice/agent_protocol.hpp"
#include "dice/fbp.hpp"
#include "dice/tomo.hpp"
#include "dice/types.hpp"

namespace dice {

struct ZeroFill {};

/// Per-detector linear interpolation across angular gaps. The half-period
/// identity y(theta + pi, s) = y(theta, -s) supplies the far boundary when a
/// gap wraps past pi.
struct AngularInterpolation {};

struct ExternalCompleter {
  protocol::AgentHandle agent;
};

using CompleterKind = std::variant<ZeroFill, AngularInterpolation, ExternalCompleter>;

namespace detail {

inline Sinogram interpolate_views(const Sinogram& y, const AngularMask& mask,
                                  const std::vector<double>& angles) {
  const std::size_t na = y.n_angles;
  const std::size_t nd = y.n_detectors;
  std::vector<std::size_t> obs;
  for (std::size_t a = 0; a < na; ++a)
    if (mask.observed(a)) obs.push_back(a);

  Sinogram out(na, nd);
  std::size_t next_idx = 0;  // first observed index > a
  for (std::size_t a = 0; a < na; ++a) {
    while (next_idx < obs.size() && obs[next_idx] <= a) ++next_idx;
    if (mask.observed(a)) continue;

    // Neighbours on the periodic angle axis; crossing 0 or pi flips detectors.
    const bool wrap_prev = next_idx == 0;
    const bool wrap_next = next_idx == obs.size();
    const std::size_t p = wrap_prev ? obs.back() : obs[next_idx - 1];
    const std::size_t q = wrap_next ? obs.front() : obs[next_idx];
    const double theta_p = angles[p] - (wrap_prev ? std::numbers::pi : 0.0);
    const double theta_q = angles[q] + (wrap_next ? std::numbers::pi : 0.0);
    const double t = (angles[a] - theta_p) / (theta_q - theta_p);

    const auto rp = y.row(p);
    const auto rq = y.row(q);
    auto dst = out.row(a);
    for (std::size_t d = 0; d < nd; ++d) {
      const double vp = rp[wrap_prev ? nd - 1 - d : d];
      const double vq = rq[wrap_next ? nd - 1 - d : d];
      dst[d] = (1.0 - t) * vp + t * vq;
    }
  }
  return out;
}

}  // namespace detail

/// Fills the missing views of `y_limited`. Observed views pass through bit
/// for bit; synthesized values are clipped to be nonnegative.
inline Sinogram complete(const Sinogram& y_limited, const AngularMask& mask,
                         const CompleterKind& completer, const Geometry& geom) {
  detail::check_sinogram(y_limited, geom);
  if (mask.size() != y_limited.n_angles) throw shape_error("complete: mask length mismatch");
  for (std::size_t a = 0; a < y_limited.n_angles; ++a)
    if (!mask.observed(a))
      for (double v : y_limited.row(a))
        if (v != 0.0) throw numerical_error("complete: unobserved views must be zero");

  Sinogram fill = std::visit(
      [&](const auto& c) -> Sinogram {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, ZeroFill>) {
          return Sinogram(y_limited.n_angles, y_limited.n_detectors);
        } else if constexpr (std::is_same_v<C, AngularInterpolation>) {
          return detail::interpolate_views(y_limited, mask, geom.angles);
        } else {
          if (!c.agent || !c.agent->alive())
            throw transport_error("completion agent is not live");
          return c.agent->complete_sinogram(y_limited, mask);
        }
      },
      completer);

  Sinogram out = y_limited;
  for (std::size_t a = 0; a < out.n_angles; ++a) {
    if (mask.observed(a)) continue;
    auto dst = out.row(a);
    const auto src = fill.row(a);
    for (std::size_t d = 0; d < out.n_detectors; ++d) dst[d] = std::max(src[d], 0.0);
  }
  return out;
}

struct ConsistentData {
  Sinogram sinogram;  // A * image
  Image image;        // FBP of the input
};

/// Inversion and re-projection cycle: returns (A FBP(y), FBP(y)). The
/// sinogram lies in the range of A.
inline ConsistentData enforce_consistency(const Sinogram& y_complete, const Geometry& geom,
                                          const FilterSpec& filter = {}) {
  Image x = fbp(y_complete, geom, filter);
  Sinogram y = forward_project(x, geom);
  return {std::move(y), std::move(x)};
}

/// Order-0 Helgason-Ludwig check: relative standard deviation of the
/// per-view detector sums. Zero for an all-zero sinogram.
inline double moment_residual(const Sinogram& sino) {
  const std::size_t na = sino.n_angles;
  if (na == 0) return 0.0;
  std::vector<double> mass(na, 0.0);
  for (std::size_t a = 0; a < na; ++a)
    for (double v : sino.row(a)) mass[a] += v;
  double mean = 0.0, mean_abs = 0.0;
  for (double m : mass) {
    mean += m;
    mean_abs += std::abs(m);
  }
  mean /= double(na);
  mean_abs /= double(na);
  if (mean_abs == 0.0) return 0.0;
  double var = 0.0;
  for (double m : mass) var += (m - mean) * (m - mean);
  return std::sqrt(var / double(na)) / mean_abs;
}

}  // namespace dice
