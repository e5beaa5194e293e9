#pragma once

// Experiment configuration (JSON) and the reconstruction methods the CLI
// exposes. Defaults: rho 0.25, mu (0.6, 0.4), sigma^2 1e-8, 4 outer
// iterations, 20 CG steps, 720 views over 180 degrees with the first 90
// observed.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "json.hpp"

#include "dice/ce_solver.hpp"
#include "dice/completion.hpp"
#include "dice/fbp.hpp"
#include "dice/image_agent.hpp"
#include "dice/types.hpp"

namespace dice {

/// Invalid experiment configuration.
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Method { fbp, fbp_pp, dc_fbp, dice, data_only };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::fbp: return "fbp";
    case Method::fbp_pp: return "fbp-pp-style";
    case Method::dc_fbp: return "dc-fbp";
    case Method::dice: return "dice";
    case Method::data_only: return "data-only";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::fbp, Method::fbp_pp, Method::dc_fbp, Method::dice, Method::data_only})
    if (method_name(m) == s) return m;
  throw config_error("unknown method '" + std::string(s) + "'");
}

struct GeometryConfig {
  std::size_t n = 256;
  std::size_t n_angles = 720;
  std::size_t n_detectors = 0;  // 0: smallest array covering the image diagonal
  double pixel_size = 1.0;
};

struct ImageAgentConfig {
  std::string kind = "tv";  // identity | tv | gaussian | external
  double lambda = 0.02;
  std::size_t inner_iters = 50;
  double sigma_px = 1.0;
  std::string command;  // external only
};

struct ExperimentConfig {
  GeometryConfig geometry;
  double observed_lo_deg = 0.0;
  double observed_hi_deg = 90.0;
  std::string completer = "angular-interpolation";  // zero-fill | angular-interpolation | external
  std::string completer_command;
  ImageAgentConfig image_agent;
  double rho = 0.25;
  std::vector<double> mu = {0.6, 0.4};
  std::size_t outer_iters = 4;
  DataAgentConfig data;
  std::optional<double> convergence_tol;
  bool reproject_after_image_agent = true;
  FilterSpec filter;
  WeightModel weights;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, std::initializer_list<std::string_view> keys,
                           const std::string& where) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  const std::set<std::string_view> allowed(keys);
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw config_error("unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error(where + "." + key + " has the wrong type");
  }
}

inline std::string filter_name(FilterKind k) { return k == FilterKind::hann ? "hann" : "ram-lak"; }

}  // namespace detail

/// Parses and validates a configuration. Missing keys keep their defaults;
/// unknown keys and ill-typed values are errors.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::reject_unknown(j, {"geometry", "mask", "completer", "image_agent", "ce", "filter", "weights",
                             "seed", "output_dir"},
                         "config");
  if (j.contains("geometry")) {
    const auto& g = j["geometry"];
    detail::reject_unknown(g, {"n", "n_angles", "n_detectors", "pixel_size"}, "geometry");
    read(g, "n", c.geometry.n, "geometry");
    read(g, "n_angles", c.geometry.n_angles, "geometry");
    read(g, "n_detectors", c.geometry.n_detectors, "geometry");
    read(g, "pixel_size", c.geometry.pixel_size, "geometry");
  }
  if (j.contains("mask")) {
    const auto& m = j["mask"];
    detail::reject_unknown(m, {"observed_degrees"}, "mask");
    std::vector<double> deg = {c.observed_lo_deg, c.observed_hi_deg};
    read(m, "observed_degrees", deg, "mask");
    if (deg.size() != 2) throw config_error("mask.observed_degrees must be [lo, hi]");
    c.observed_lo_deg = deg[0];
    c.observed_hi_deg = deg[1];
  }
  if (j.contains("completer")) {
    const auto& m = j["completer"];
    if (m.is_string()) {
      c.completer = m.get<std::string>();
    } else {
      detail::reject_unknown(m, {"kind", "command"}, "completer");
      read(m, "kind", c.completer, "completer");
      read(m, "command", c.completer_command, "completer");
    }
  }
  if (j.contains("image_agent")) {
    const auto& a = j["image_agent"];
    detail::reject_unknown(a, {"kind", "lambda", "inner_iters", "sigma_px", "command"}, "image_agent");
    read(a, "kind", c.image_agent.kind, "image_agent");
    read(a, "lambda", c.image_agent.lambda, "image_agent");
    read(a, "inner_iters", c.image_agent.inner_iters, "image_agent");
    read(a, "sigma_px", c.image_agent.sigma_px, "image_agent");
    read(a, "command", c.image_agent.command, "image_agent");
  }
  if (j.contains("ce")) {
    const auto& e = j["ce"];
    detail::reject_unknown(e, {"rho", "mu", "outer_iters", "sigma2", "cg_iters", "cg_tol", "nonneg",
                               "convergence_tol", "reproject_after_image_agent"},
                           "ce");
    read(e, "rho", c.rho, "ce");
    read(e, "mu", c.mu, "ce");
    read(e, "outer_iters", c.outer_iters, "ce");
    read(e, "sigma2", c.data.sigma2, "ce");
    read(e, "cg_iters", c.data.cg_iters, "ce");
    read(e, "cg_tol", c.data.cg_tol, "ce");
    read(e, "nonneg", c.data.nonneg, "ce");
    read(e, "reproject_after_image_agent", c.reproject_after_image_agent, "ce");
    if (e.contains("convergence_tol") && !e["convergence_tol"].is_null()) {
      double tol = 0;
      read(e, "convergence_tol", tol, "ce");
      c.convergence_tol = tol;
    }
  }
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    detail::reject_unknown(f, {"kind", "cutoff"}, "filter");
    std::string kind = detail::filter_name(c.filter.kind);
    read(f, "kind", kind, "filter");
    if (kind == "ram-lak")
      c.filter.kind = FilterKind::ram_lak;
    else if (kind == "hann")
      c.filter.kind = FilterKind::hann;
    else
      throw config_error("filter.kind must be ram-lak or hann");
    read(f, "cutoff", c.filter.cutoff, "filter");
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    detail::reject_unknown(w, {"model", "gain", "floor"}, "weights");
    std::string model = "uniform";
    read(w, "model", model, "weights");
    if (model == "uniform")
      c.weights = WeightModel::uniform();
    else if (model == "variance")
      c.weights.kind = WeightModel::Kind::variance;
    else
      throw config_error("weights.model must be uniform or variance");
    read(w, "gain", c.weights.gain, "weights");
    read(w, "floor", c.weights.floor, "weights");
  }
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");

  // Semantic checks, before any compute.
  if (c.geometry.n < 1 || c.geometry.n_angles < 2) throw config_error("geometry is degenerate");
  if (!(c.geometry.pixel_size > 0)) throw config_error("geometry.pixel_size must be positive");
  if (!(c.observed_hi_deg > c.observed_lo_deg)) throw config_error("mask range is empty");
  const std::set<std::string> completers = {"zero-fill", "angular-interpolation", "external"};
  if (!completers.contains(c.completer)) throw config_error("unknown completer '" + c.completer + "'");
  if (c.completer == "external" && c.completer_command.empty())
    throw config_error("external completer needs a command");
  const std::set<std::string> agents = {"identity", "tv", "gaussian", "external"};
  if (!agents.contains(c.image_agent.kind))
    throw config_error("unknown image agent '" + c.image_agent.kind + "'");
  if (c.image_agent.kind == "tv" && !(c.image_agent.lambda > 0))
    throw config_error("image_agent.lambda must be positive");
  if (c.image_agent.kind == "gaussian" && !(c.image_agent.sigma_px > 0))
    throw config_error("image_agent.sigma_px must be positive");
  if (c.image_agent.kind == "external" && c.image_agent.command.empty())
    throw config_error("external image agent needs a command");
  try {
    CEConfig probe;
    probe.rho = c.rho;
    probe.mu = c.mu;
    probe.data_cfg = c.data;
    probe.filter = c.filter;
    probe.validate();
    if (c.weights.kind == WeightModel::Kind::variance && (!(c.weights.gain > 0) || !(c.weights.floor > 0)))
      throw numerical_error("variance weights need positive gain and floor");
  } catch (const numerical_error& e) {
    throw config_error(e.what());
  } catch (const shape_error& e) {
    throw config_error(e.what());
  }
  return c;
}

/// Fully resolved configuration, every field spelled out.
inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["geometry"] = {{"n", c.geometry.n},
                   {"n_angles", c.geometry.n_angles},
                   {"n_detectors", c.geometry.n_detectors},
                   {"pixel_size", c.geometry.pixel_size}};
  j["mask"] = {{"observed_degrees", {c.observed_lo_deg, c.observed_hi_deg}}};
  j["completer"] = {{"kind", c.completer}, {"command", c.completer_command}};
  j["image_agent"] = {{"kind", c.image_agent.kind},
                      {"lambda", c.image_agent.lambda},
                      {"inner_iters", c.image_agent.inner_iters},
                      {"sigma_px", c.image_agent.sigma_px},
                      {"command", c.image_agent.command}};
  nlohmann::ordered_json ce;
  ce["rho"] = c.rho;
  ce["mu"] = c.mu;
  ce["outer_iters"] = c.outer_iters;
  ce["sigma2"] = c.data.sigma2;
  ce["cg_iters"] = c.data.cg_iters;
  ce["cg_tol"] = c.data.cg_tol;
  ce["nonneg"] = c.data.nonneg;
  ce["convergence_tol"] = c.convergence_tol ? nlohmann::ordered_json(*c.convergence_tol) : nullptr;
  ce["reproject_after_image_agent"] = c.reproject_after_image_agent;
  j["ce"] = ce;
  j["filter"] = {{"kind", detail::filter_name(c.filter.kind)}, {"cutoff", c.filter.cutoff}};
  j["weights"] = {{"model", c.weights.kind == WeightModel::Kind::uniform ? "uniform" : "variance"},
                  {"gain", c.weights.gain},
                  {"floor", c.weights.floor}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

inline Geometry make_geometry(const GeometryConfig& g) {
  return parallel_geometry(g.n, g.n_angles, g.n_detectors, g.pixel_size);
}

/// Agents resolved from a configuration. External handles are spawned here.
struct ResolvedAgents {
  CompleterKind completer;
  ImageAgentKind image_agent;
};

inline ResolvedAgents resolve_agents(const ExperimentConfig& c) {
  ResolvedAgents r;
  if (c.completer == "zero-fill")
    r.completer = ZeroFill{};
  else if (c.completer == "angular-interpolation")
    r.completer = AngularInterpolation{};
  else
    r.completer = ExternalCompleter{protocol::AgentClient::spawn(c.completer_command)};

  const auto& a = c.image_agent;
  if (a.kind == "identity")
    r.image_agent = IdentityAgent{};
  else if (a.kind == "tv")
    r.image_agent = TvDenoiser{a.lambda, a.inner_iters};
  else if (a.kind == "gaussian")
    r.image_agent = GaussianSmoother{a.sigma_px};
  else
    r.image_agent = ExternalImageAgent{protocol::AgentClient::spawn(a.command)};
  return r;
}

inline CEConfig ce_config(const ExperimentConfig& c, const ImageAgentKind& agent) {
  CEConfig ce;
  ce.rho = c.rho;
  ce.mu = c.mu;
  ce.outer_iters = c.outer_iters;
  ce.data_cfg = c.data;
  ce.image_agent = agent;
  ce.convergence_tol = c.convergence_tol;
  ce.filter = c.filter;
  ce.weights = c.weights;
  ce.reproject_after_image_agent = c.reproject_after_image_agent;
  return ce;
}

struct MethodResult {
  Image x;
  CETrace trace;
};

/// Reconstructs limited data with one of the comparison methods:
///   fbp           FBP of the limited data
///   fbp-pp-style  image agent applied to the limited-data FBP
///   dc-fbp        FBP of the completed data
///   dice          consensus of the data and image agents
///   data-only     the same consensus run with an identity image agent
inline MethodResult reconstruct(Method method, const Sinogram& y_limited, const AngularMask& mask,
                                const ResolvedAgents& agents, const CEConfig& ce, const Geometry& geom) {
  switch (method) {
    case Method::fbp:
      return {fbp(y_limited, geom, ce.filter), {}};
    case Method::fbp_pp:
      return {apply_image_agent(fbp(y_limited, geom, ce.filter), ce.image_agent), {}};
    case Method::dc_fbp:
      return {fbp(complete(y_limited, mask, agents.completer, geom), geom, ce.filter), {}};
    case Method::dice: {
      auto r = dice_reconstruct(y_limited, mask, agents.completer, ce, geom);
      return {std::move(r.x), std::move(r.trace)};
    }
    case Method::data_only: {
      CEConfig plain = ce;
      plain.image_agent = IdentityAgent{};
      auto r = dice_reconstruct(y_limited, mask, agents.completer, plain, geom);
      return {std::move(r.x), std::move(r.trace)};
    }
  }
  throw config_error("unknown method");
}

}  // namespace dice
