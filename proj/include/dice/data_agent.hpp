#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dice/tomo.hpp"
#include "dice/types.hpp"

namespace dice {

struct WeightModel {
  enum class Kind { uniform, variance } kind = Kind::uniform;
  double gain = 1.0;
  double floor = 1e-6;

  static WeightModel uniform() { return {}; }
  static WeightModel variance(double gain, double floor) { return {Kind::variance, gain, floor}; }
};

/// Diagonal of the data weighting matrix W.
struct DataWeights {
  std::vector<double> w;
  WeightModel model;
};

/// uniform: w_i = 1. variance: w_i = 1 / max(gain * y_i, floor), a
/// signal-proportional variance proxy.
inline DataWeights build_weights(const Sinogram& y, const WeightModel& model = {}) {
  DataWeights out{std::vector<double>(y.values.size(), 1.0), model};
  if (model.kind == WeightModel::Kind::uniform) return out;
  if (!(model.gain > 0) || !(model.floor > 0))
    throw numerical_error("variance weights need positive gain and floor");
  for (std::size_t i = 0; i < y.values.size(); ++i)
    out.w[i] = 1.0 / std::max(model.gain * y.values[i], model.floor);
  return out;
}

struct DataAgentConfig {
  double sigma2 = 1e-8;
  std::size_t cg_iters = 20;
  double cg_tol = 1e-12;  // relative residual
  bool nonneg = true;

  void validate() const {
    if (!(sigma2 > 0) || !std::isfinite(sigma2)) throw numerical_error("sigma2 must be positive");
    if (cg_iters < 1) throw numerical_error("cg_iters must be >= 1");
  }
};

struct ProxResult {
  Image x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool breakdown = false;  // zero-curvature direction met; x is the last iterate
};

/// Called with (iteration, iterate) after the warm start and after each CG step.
using CgObserver = std::function<void(std::size_t, std::span<const double>)>;

/// 0.5 ||y - A x||_W^2 + ||v - x||^2 / (2 sigma2)
inline double data_objective(const Image& x, const Image& v, const Sinogram& y, const DataWeights& W,
                             double sigma2, const Geometry& geom) {
  const Sinogram ax = forward_project(x, geom);
  double fit = 0.0;
  for (std::size_t i = 0; i < ax.values.size(); ++i) {
    const double r = y.values[i] - ax.values[i];
    fit += W.w[i] * r * r;
  }
  const double prox = detail::diff_norm(v.values, x.values);
  return 0.5 * fit + prox * prox / (2.0 * sigma2);
}

/// Proximal map of the weighted data term: conjugate gradient on
///   (A^T W A + I / sigma2) x = A^T W y + v / sigma2
/// warm-started at v, followed by clipping to x >= 0 when cfg.nonneg.
inline ProxResult prox_data(const Image& v1, const Sinogram& y, const DataWeights& W,
                            const DataAgentConfig& cfg, const Geometry& geom,
                            const CgObserver& observer = {}) {
  cfg.validate();
  detail::check_image(v1, geom);
  detail::check_sinogram(y, geom);
  if (W.w.size() != y.values.size()) throw shape_error("prox_data: weight length mismatch");
  if (!all_finite(v1.values) || !all_finite(y.values) || !all_finite(W.w))
    throw numerical_error("prox_data: non-finite input");

  const double inv_s2 = 1.0 / cfg.sigma2;
  const std::size_t n = v1.size();

  auto weighted = [&](Sinogram s) {
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] *= W.w[i];
    return s;
  };
  auto normal_op = [&](const Image& p) {
    Image hp = back_project(weighted(forward_project(p, geom)), geom);
    for (std::size_t i = 0; i < n; ++i) hp.values[i] += inv_s2 * p.values[i];
    return hp;
  };

  Image b = back_project(weighted(y), geom);
  for (std::size_t i = 0; i < n; ++i) b.values[i] += inv_s2 * v1.values[i];
  const double b_norm = detail::norm(b.values);

  ProxResult res;
  res.x = v1;
  Image& x = res.x;
  Image hx = normal_op(x);
  Image r = b;
  for (std::size_t i = 0; i < n; ++i) r.values[i] -= hx.values[i];
  Image p = r;
  double rr = detail::dot(r.values, r.values);
  auto rel = [&](double rr_) { return b_norm > 0 ? std::sqrt(rr_) / b_norm : std::sqrt(rr_); };
  res.relative_residual = rel(rr);
  if (observer) observer(0, x.values);

  for (std::size_t it = 0; it < cfg.cg_iters; ++it) {
    if (rr == 0.0 || res.relative_residual <= cfg.cg_tol) break;
    const Image hp = normal_op(p);
    const double curv = detail::dot(p.values, hp.values);
    if (!(curv > 0.0)) {
      res.breakdown = true;
      break;
    }
    const double alpha = rr / curv;
    for (std::size_t i = 0; i < n; ++i) {
      x.values[i] += alpha * p.values[i];
      r.values[i] -= alpha * hp.values[i];
    }
    const double rr_new = detail::dot(r.values, r.values);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t i = 0; i < n; ++i) p.values[i] = r.values[i] + beta * p.values[i];
    res.iterations = it + 1;
    res.relative_residual = rel(rr);
    if (observer) observer(it + 1, x.values);
  }

  if (cfg.nonneg)
    for (double& v : x.values) v = std::max(v, 0.0);
  return res;
}

}  // namespace dice
