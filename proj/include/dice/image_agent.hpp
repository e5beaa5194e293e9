#pragma once

#include <cmath>
#include <cstddef>
#include <variant>
#include <vector>

#include "dice/agent_protocol.hpp"
#include "dice/types.hpp"

namespace dice {

struct IdentityAgent {};

/// argmin_x 0.5 ||x - v||^2 + lambda TV(x), isotropic TV with Neumann
/// boundaries, solved by Chambolle's dual projection iteration.
struct TvDenoiser {
  double lambda = 0.02;
  std::size_t inner_iters = 50;
};

struct GaussianSmoother {
  double sigma_px = 1.0;
};

struct ExternalImageAgent {
  protocol::AgentHandle agent;
};

using ImageAgentKind = std::variant<IdentityAgent, TvDenoiser, GaussianSmoother, ExternalImageAgent>;

namespace detail {

inline Image tv_denoise(const Image& v, const TvDenoiser& cfg) {
  if (!(cfg.lambda > 0)) throw numerical_error("tv-denoiser: lambda must be positive");
  const std::size_t W = v.width, H = v.height, n = v.size();
  constexpr double tau = 0.125;
  std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0), term(n);
  const double inv_lambda = 1.0 / cfg.lambda;

  auto divergence = [&] {
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t k = i * W + j;
        double d = 0.0;
        d += (j + 1 < W ? px[k] : 0.0) - (j > 0 ? px[k - 1] : 0.0);
        d += (i + 1 < H ? py[k] : 0.0) - (i > 0 ? py[k - W] : 0.0);
        div[k] = d;
      }
  };

  for (std::size_t it = 0; it < cfg.inner_iters; ++it) {
    divergence();
    for (std::size_t k = 0; k < n; ++k) term[k] = div[k] - v.values[k] * inv_lambda;
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        const std::size_t k = i * W + j;
        const double gx = j + 1 < W ? term[k + 1] - term[k] : 0.0;
        const double gy = i + 1 < H ? term[k + W] - term[k] : 0.0;
        const double denom = 1.0 + tau * std::sqrt(gx * gx + gy * gy);
        px[k] = (px[k] + tau * gx) / denom;
        py[k] = (py[k] + tau * gy) / denom;
      }
  }
  divergence();
  Image out = v;
  for (std::size_t k = 0; k < n; ++k) out.values[k] = v.values[k] - cfg.lambda * div[k];
  return out;
}

/// Half-sample symmetric reflection into [0, n).
inline std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  return m < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(m)
                                            : static_cast<std::size_t>(period - 1 - m);
}

inline Image gaussian_smooth(const Image& v, const GaussianSmoother& cfg) {
  if (!(cfg.sigma_px > 0)) throw numerical_error("gaussian-smoother: sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * cfg.sigma_px));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-double(i * i) / (2.0 * cfg.sigma_px * cfg.sigma_px));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;

  const std::size_t W = v.width, H = v.height;
  Image tmp = v, out = v;
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        s += k[static_cast<std::size_t>(i + radius)] * v(r, reflect(std::ptrdiff_t(c) + i, W));
      tmp(r, c) = s;
    }
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      double s = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        s += k[static_cast<std::size_t>(i + radius)] * tmp(reflect(std::ptrdiff_t(r) + i, H), c);
      out(r, c) = s;
    }
  return out;
}

}  // namespace detail

inline Image apply_image_agent(const Image& v2, const ImageAgentKind& kind) {
  if (!all_finite(v2.values)) throw numerical_error("image agent: non-finite input");
  return std::visit(
      [&](const auto& a) -> Image {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, IdentityAgent>) {
          return v2;
        } else if constexpr (std::is_same_v<A, TvDenoiser>) {
          return detail::tv_denoise(v2, a);
        } else if constexpr (std::is_same_v<A, GaussianSmoother>) {
          return detail::gaussian_smooth(v2, a);
        } else {
          if (!a.agent || !a.agent->alive()) throw transport_error("image agent is not live");
          return a.agent->process_image(v2);
        }
      },
      kind);
}

}  // namespace dice
