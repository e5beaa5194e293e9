#pragma once

#include <chrono>
#include <cmath>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dice/completion.hpp"
#include "dice/data_agent.hpp"
#include "dice/fbp.hpp"
#include "dice/image_agent.hpp"
#include "dice/tomo.hpp"
#include "dice/types.hpp"

namespace dice {

/// Stacked agent variables, one image per agent.
struct AgentStack {
  std::vector<Image> slots;

  std::size_t size() const { return slots.size(); }
  Image& operator[](std::size_t i) { return slots[i]; }
  const Image& operator[](std::size_t i) const { return slots[i]; }

  static AgentStack replicate(const Image& x, std::size_t n = 2) {
    return AgentStack{std::vector<Image>(n, x)};
  }

  double norm() const {
    double s = 0.0;
    for (const auto& im : slots) s += detail::dot(im.values, im.values);
    return std::sqrt(s);
  }

  void validate() const {
    if (slots.empty()) throw shape_error("agent stack is empty");
    for (const auto& im : slots) {
      if (!im.same_shape(slots.front()) || im.values.size() != slots.front().values.size())
        throw shape_error("agent stack slots differ in shape");
      if (!all_finite(im.values)) throw numerical_error("agent stack holds non-finite values");
    }
  }
};

inline double stack_distance(const AgentStack& a, const AgentStack& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = detail::diff_norm(a[i].values, b[i].values);
    s += d * d;
  }
  return std::sqrt(s);
}

inline void validate_weights(std::span<const double> mu, std::size_t agents) {
  if (mu.size() != agents) throw shape_error("agent weight count does not match stack size");
  double sum = 0.0;
  for (double m : mu) {
    if (!(m >= 0.0)) throw numerical_error("agent weights must be nonnegative");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw numerical_error("agent weights must sum to 1");
}

/// The mu-weighted mean of the slots. Where every slot holds the same value
/// that value is returned unchanged, which keeps G exactly idempotent.
inline Image weighted_mean(const AgentStack& z, std::span<const double> mu) {
  Image out = z[0];
  const std::size_t n = out.size();
  for (std::size_t p = 0; p < n; ++p) {
    const double first = z[0].values[p];
    bool equal = true;
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double v = z[i].values[p];
      equal = equal && v == first;
      s += mu[i] * v;
    }
    out.values[p] = equal ? first : s;
  }
  return out;
}

/// G: every slot replaced by the weighted mean.
inline AgentStack average_op(const AgentStack& z, std::span<const double> mu) {
  z.validate();
  validate_weights(mu, z.size());
  return AgentStack::replicate(weighted_mean(z, mu), z.size());
}

/// (2G - I) z
inline AgentStack reflect_average(const AgentStack& z, std::span<const double> mu) {
  const Image mean = average_op(z, mu)[0];
  AgentStack v = z;
  for (auto& slot : v.slots)
    for (std::size_t p = 0; p < slot.size(); ++p) slot.values[p] = 2.0 * mean.values[p] - slot.values[p];
  return v;
}

struct CETraceRow {
  std::size_t iteration = 0;
  double mann_residual = 0.0;                 // ||z_new - z|| / ||z||
  std::vector<double> equilibrium_residual;   // ||F_i(v_i) - mean(z)|| / ||mean(z)||
  double seconds = 0.0;
};

using CETrace = std::vector<CETraceRow>;

/// Data term shared by every data-agent call of a run.
struct DataTerm {
  Sinogram y;
  DataWeights weights;
  Geometry geom;
};

/// F = (F_data, F_image) for the two-agent reconstruction.
struct DiceAgents {
  const DataTerm& data;
  DataAgentConfig data_cfg;
  ImageAgentKind image_agent;

  Image operator()(std::size_t slot, const Image& v) const {
    if (slot == 0) return prox_data(v, data.y, data.weights, data_cfg, data.geom).x;
    return apply_image_agent(v, image_agent);
  }
};

namespace detail {

template <class Fn>
auto with_label(const std::string& label, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const transport_error& e) {
    throw transport_error(label + ": " + e.what());
  } catch (const numerical_error& e) {
    throw numerical_error(label + ": " + e.what());
  } catch (const shape_error& e) {
    throw shape_error(label + ": " + e.what());
  }
}

}  // namespace detail

/// Applies agent i to slot i. `agents(i, image)` evaluates agent i. Slots
/// are independent; with DICE_NUM_THREADS > 1 they are evaluated
/// concurrently, which does not change any result.
template <class Agents>
AgentStack apply_F(const AgentStack& v, Agents&& agents) {
  auto eval = [&](std::size_t i) {
    return detail::with_label("agent slot " + std::to_string(i + 1), [&] { return agents(i, v[i]); });
  };
  AgentStack out;
  out.slots.resize(v.size());
  if (v.size() > 1 && max_threads() > 1) {
    std::vector<std::future<Image>> pending;
    for (std::size_t i = 1; i < v.size(); ++i) pending.push_back(std::async(std::launch::async, eval, i));
    out[0] = eval(0);
    for (std::size_t i = 1; i < v.size(); ++i) out[i] = pending[i - 1].get();
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = eval(i);
  }
  return out;
}

/// Convenience overload for the data/image agent pair.
inline AgentStack apply_F(const AgentStack& v, const DataTerm& data, const DataAgentConfig& data_cfg,
                          const ImageAgentKind& image_agent) {
  if (v.size() != 2) throw shape_error("apply_F expects a two-slot stack");
  return apply_F(v, DiceAgents{data, data_cfg, image_agent});
}

/// One damped step z <- z + rho (T z - z), T = (2F - I)(2G - I).
template <class Agents>
std::pair<AgentStack, CETraceRow> mann_step(const AgentStack& z, double rho, std::span<const double> mu,
                                            Agents&& agents) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw numerical_error("mann step: rho must be in [0, 1]");
  const auto t0 = std::chrono::steady_clock::now();
  const Image mean = average_op(z, mu)[0];
  const AgentStack v = reflect_average(z, mu);
  const AgentStack X = apply_F(v, agents);

  CETraceRow row;
  const double mean_norm = detail::norm(mean.values);
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double r = detail::diff_norm(X[i].values, mean.values);
    row.equilibrium_residual.push_back(mean_norm > 0 ? r / mean_norm : r);
  }

  AgentStack next = z;
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t p = 0; p < z[i].size(); ++p) {
      const double t = 2.0 * X[i].values[p] - v[i].values[p];
      next[i].values[p] = z[i].values[p] + rho * (t - z[i].values[p]);
    }

  const double zn = z.norm();
  const double step = stack_distance(next, z);
  row.mann_residual = zn > 0 ? step / zn : step;
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(next), std::move(row)};
}

/// Consensus-equilibrium residuals of a stack z, with x = mean(z) and
/// u_i = v_i - x for v = (2G - I) z.
struct CEResiduals {
  Image x;
  std::vector<double> agent;  // ||F_i(x + u_i) - x|| / ||x||
  double balance = 0.0;       // ||sum_i mu_i u_i|| / ||x||
};

template <class Agents>
CEResiduals ce_residuals(const AgentStack& z, std::span<const double> mu, Agents&& agents) {
  CEResiduals out;
  out.x = weighted_mean(z, mu);
  const AgentStack v = reflect_average(z, mu);
  const double xn = detail::norm(out.x.values);
  const double scale = xn > 0 ? xn : 1.0;
  std::vector<double> balance(out.x.size(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::vector<double> u(out.x.size());
    for (std::size_t p = 0; p < u.size(); ++p) u[p] = v[i].values[p] - out.x.values[p];
    for (std::size_t p = 0; p < u.size(); ++p) balance[p] += mu[i] * u[p];
    Image probe = out.x;
    for (std::size_t p = 0; p < u.size(); ++p) probe.values[p] += u[p];
    const Image fx = agents(i, probe);
    out.agent.push_back(detail::diff_norm(fx.values, out.x.values) / scale);
  }
  out.balance = detail::norm(balance) / scale;
  return out;
}

// ---- full reconstruction ---------------------------------------------------

struct CEConfig {
  double rho = 0.25;
  std::vector<double> mu = {0.6, 0.4};
  std::size_t outer_iters = 4;
  DataAgentConfig data_cfg{};
  ImageAgentKind image_agent = TvDenoiser{};
  std::optional<double> convergence_tol;
  FilterSpec filter{};
  WeightModel weights{};
  /// Re-project the image-agent output (true) or the raw FBP image (false).
  bool reproject_after_image_agent = true;

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw numerical_error("rho must be in (0, 1)");
    validate_weights(mu, 2);
    data_cfg.validate();
    filter.validate();
  }
};

struct DiceResult {
  Image x;
  CETrace trace;
  AgentStack z;
  Sinogram y_complete;
  Sinogram y_consistent;
  Image x_fbp;
  Image x_init;
};

/// Raised when a reconstruction stage fails; carries the trace so far.
struct stage_error : std::runtime_error {
  stage_error(std::string stage, const std::exception& cause, CETrace trace, int category)
      : std::runtime_error(stage + ": " + cause.what()),
        stage(std::move(stage)),
        trace(std::move(trace)),
        category(category) {}
  std::string stage;
  CETrace trace;
  int category;  // 0 numerical, 1 transport, 2 shape
};

namespace detail {

template <class Fn>
auto stage(const std::string& name, const CETrace& trace, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const transport_error& e) {
    throw stage_error(name, e, trace, 1);
  } catch (const shape_error& e) {
    throw stage_error(name, e, trace, 2);
  } catch (const numerical_error& e) {
    throw stage_error(name, e, trace, 0);
  }
}

}  // namespace detail

/// Complete the data, initialize from FBP and the image agent, then run
/// damped consensus iterations between the data and image agents.
inline DiceResult dice_reconstruct(const Sinogram& y_limited, const AngularMask& mask,
                                   const CompleterKind& completer, const CEConfig& cfg,
                                   const Geometry& geom) {
  DiceResult res;
  detail::stage("config", res.trace, [&] {
    geom.validate();
    cfg.validate();
  });
  res.y_complete =
      detail::stage("completion", res.trace, [&] { return complete(y_limited, mask, completer, geom); });
  res.x_fbp = detail::stage("fbp", res.trace, [&] { return fbp(res.y_complete, geom, cfg.filter); });
  res.x_init = detail::stage("initialization", res.trace,
                             [&] { return apply_image_agent(res.x_fbp, cfg.image_agent); });
  res.y_consistent = detail::stage("consistency", res.trace, [&] {
    return forward_project(cfg.reproject_after_image_agent ? res.x_init : res.x_fbp, geom);
  });

  const DataTerm data{res.y_consistent, build_weights(res.y_consistent, cfg.weights), geom};
  const DiceAgents agents{data, cfg.data_cfg, cfg.image_agent};

  res.z = average_op(AgentStack::replicate(res.x_init), cfg.mu);
  for (std::size_t k = 0; k < cfg.outer_iters; ++k) {
    auto [next, row] = detail::stage("consensus iteration " + std::to_string(k + 1), res.trace,
                                     [&] { return mann_step(res.z, cfg.rho, cfg.mu, agents); });
    row.iteration = k + 1;
    res.z = std::move(next);
    const double change = row.mann_residual;
    res.trace.push_back(std::move(row));
    if (cfg.convergence_tol && change < *cfg.convergence_tol) break;
  }
  res.x = weighted_mean(res.z, cfg.mu);
  return res;
}

}  // namespace dice
