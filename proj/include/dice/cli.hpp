#pragma once

// Command-line driver. Exit codes: 0 success, 1 usage, 2 I/O or format
// (including agent transport), 3 numerical failure. Diagnostics go to the
// error stream only.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dice/agent_protocol.hpp"
#include "dice/ce_solver.hpp"
#include "dice/completion.hpp"
#include "dice/experiment.hpp"
#include "dice/fbp.hpp"
#include "dice/metrics.hpp"
#include "dice/phantom.hpp"
#include "dice/raster_io.hpp"
#include "dice/tomo.hpp"

#ifndef DICE_VERSION
#define DICE_VERSION "0.1.0-unknown"
#endif

namespace dice::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum ExitCode : int { ok = 0, usage = 1, io_failure = 2, numerical_failure = 3 };

struct usage_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void write_json(const fs::path& path, const ojson& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io::format_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline ojson hu_json(const HuConvention& hu) {
  return {{"slope", hu.slope}, {"intercept", hu.intercept}, {"units", "HU = slope * value + intercept"}};
}

inline void write_manifest(const fs::path& dir, const std::string& subcommand, const ojson& args,
                           const std::optional<ExperimentConfig>& cfg, const std::vector<std::string>& outputs) {
  ojson m;
  m["tool"] = "dice";
  m["version"] = DICE_VERSION;
  m["subcommand"] = subcommand;
  m["arguments"] = args;
  if (cfg) m["config"] = to_json(*cfg);
  m["hu_convention"] = hu_json(HuConvention{});
  m["outputs"] = outputs;
  write_json(dir / "manifest.json", m);
}

inline ojson metrics_json(const Image& x, const Image& ref) {
  const HuConvention hu;
  ojson j;
  const double e = rmse(x, ref);
  j["rmse"] = e;
  j["rmse_hu"] = hu.scale_error(e);
  const double p = psnr(x, ref);
  if (std::isinf(p))
    j["psnr_db"] = "inf";
  else
    j["psnr_db"] = p;
  j["ssim"] = ssim(x, ref);
  j["rmse_interior"] = rmse(x, ref, inscribed_disk(ref));
  j["reference_range"] = dice::detail::dynamic_range(ref);
  j["hu_convention"] = hu_json(hu);
  return j;
}

inline ojson trace_json(const CETrace& trace) {
  ojson rows = ojson::array();
  for (const auto& r : trace)
    rows.push_back({{"iteration", r.iteration},
                    {"mann_residual", r.mann_residual},
                    {"equilibrium_residual", r.equilibrium_residual}});
  return rows;
}

/// "lo:hi" in degrees.
inline std::pair<double, double> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw usage_error("expected LO:HI degrees, got '" + s + "'");
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw usage_error("expected LO:HI degrees, got '" + s + "'");
  }
}

inline AngularMask mask_of(const io::Raster& r, const Geometry& g, const ExperimentConfig& cfg) {
  if (r.observed) return AngularMask(*r.observed);
  return AngularMask::from_degrees(g, cfg.observed_lo_deg, cfg.observed_hi_deg);
}

inline ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return parse_config(nlohmann::json::object());
  std::ifstream in(path);
  if (!in) throw io::format_error("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw io::format_error(path + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace detail

/// Runs one CLI invocation.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Limited-angle CT reconstruction with data completion and consensus equilibrium", "dice"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DICE_VERSION);

  std::string output, input, ref, config_path, agent_cmd, agent_role = "image";
  std::string kind = "shepp-logan", range = "0:90", method = "dice", filter = "ram-lak";
  std::string completer = "angular-interpolation";
  std::size_t n = 256, n_angles = 720, n_detectors = 0, objects = 6, rows = 8, cols = 8;
  std::uint64_t seed = 0;
  double pixel_size = 1.0, cutoff = 1.0;
  bool consistent = false;

  auto* phantom = app.add_subcommand("phantom", "Write a phantom image");
  phantom->add_option("--kind", kind, "shepp-logan | shepp-logan-symmetric | random-ellipses")
      ->check(CLI::IsMember({"shepp-logan", "shepp-logan-symmetric", "random-ellipses"}));
  phantom->add_option("--n", n, "Grid size")->check(CLI::Range(16, 8192));
  phantom->add_option("--seed", seed, "Seed for random scenes");
  phantom->add_option("--objects", objects, "Objects in a random scene");
  phantom->add_option("--pixel-size", pixel_size, "Pixel size")->check(CLI::PositiveNumber);
  phantom->add_option("-o,--output", output, "Output directory")->required();

  auto* project = app.add_subcommand("project", "Forward-project an image");
  project->add_option("-i,--input", input, "Image header")->required();
  project->add_option("--n-angles", n_angles, "Views over [0, 180) degrees")->check(CLI::Range(1, 100000));
  project->add_option("--n-detectors", n_detectors, "Detector bins (0: cover the diagonal)");
  project->add_option("-o,--output", output, "Output directory")->required();

  auto* mask = app.add_subcommand("mask", "Keep only the views inside an angular range");
  mask->add_option("-i,--input", input, "Sinogram header")->required();
  mask->add_option("--observed-deg", range, "Observed range LO:HI in degrees");
  mask->add_option("-o,--output", output, "Output directory")->required();

  auto* fbp_cmd = app.add_subcommand("fbp", "Filtered backprojection");
  fbp_cmd->add_option("-i,--input", input, "Sinogram header")->required();
  fbp_cmd->add_option("--filter", filter, "ram-lak | hann")->check(CLI::IsMember({"ram-lak", "hann"}));
  fbp_cmd->add_option("--cutoff", cutoff, "Cutoff as a fraction of Nyquist");
  fbp_cmd->add_option("-o,--output", output, "Output directory")->required();

  auto* complete_cmd = app.add_subcommand("complete", "Fill missing views");
  complete_cmd->add_option("-i,--input", input, "Limited sinogram header")->required();
  complete_cmd->add_option("--completer", completer, "zero-fill | angular-interpolation")
      ->check(CLI::IsMember({"zero-fill", "angular-interpolation"}));
  complete_cmd->add_option("--agent-cmd", agent_cmd, "External completion agent command");
  complete_cmd->add_flag("--consistent", consistent, "Also run the FBP / re-projection cycle");
  complete_cmd->add_option("--observed-deg", range, "Observed range when the header has no mask");
  complete_cmd->add_option("-o,--output", output, "Output directory")->required();

  auto* recon = app.add_subcommand("reconstruct", "Reconstruct limited-angle data");
  recon->add_option("-i,--input", input, "Limited sinogram header")->required();
  recon->add_option("--method", method, "fbp | fbp-pp-style | dc-fbp | dice | data-only")
      ->check(CLI::IsMember({"fbp", "fbp-pp-style", "dc-fbp", "dice", "data-only"}));
  recon->add_option("--config", config_path, "Experiment configuration JSON");
  recon->add_option("--agent-cmd", agent_cmd, "External agent command");
  recon->add_option("--agent-role", agent_role, "image | completer")
      ->check(CLI::IsMember({"image", "completer"}));
  recon->add_option("--ref", ref, "Reference image for metrics");
  recon->add_option("--seed", seed, "Run seed (recorded in the manifest)");
  recon->add_option("-o,--output", output, "Output directory")->required();

  auto* metrics_cmd = app.add_subcommand("metrics", "Compare an image to a reference");
  metrics_cmd->add_option("-i,--input", input, "Image header")->required();
  metrics_cmd->add_option("--ref", ref, "Reference image header")->required();
  metrics_cmd->add_option("-o,--output", output, "Metrics JSON path");

  auto* check = app.add_subcommand("agent-check", "Handshake with an external agent and probe it");
  check->add_option("--agent-cmd", agent_cmd, "Agent command")->required();
  check->add_option("--rows", rows, "Probe rows")->check(CLI::Range(1, 4096));
  check->add_option("--cols", cols, "Probe columns")->check(CLI::Range(1, 4096));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForVersion&) {
    out << DICE_VERSION << '\n';
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "dice: " << e.what() << '\n';
    return usage;
  }

  try {
    const fs::path dir = output;
    if (phantom->parsed()) {
      Image img;
      if (kind == "random-ellipses")
        img = rasterize(random_ellipse_scene(n, seed, objects), pixel_size);
      else
        img = shepp_logan(n, kind == "shepp-logan-symmetric", pixel_size);
      io::write_raster(dir / "phantom.json", io::to_raster(img));
      detail::write_manifest(dir, "phantom",
                             {{"kind", kind}, {"n", n}, {"seed", seed}, {"objects", objects},
                              {"pixel_size", pixel_size}},
                             std::nullopt, {"phantom.json"});
      return ok;
    }

    if (project->parsed()) {
      const Image img = io::image_from(io::read_raster(input));
      if (img.width != img.height) throw usage_error("project expects a square image");
      Geometry g = parallel_geometry(img.width, n_angles, n_detectors, img.pixel_size);
      if (!g.covers_image()) err << "dice: warning: detector array does not cover the image diagonal\n";
      const Sinogram s = forward_project(img, g);
      io::write_raster(dir / "sinogram.json", io::to_raster(s, g));
      detail::write_manifest(dir, "project",
                             {{"input", input}, {"n_angles", n_angles}, {"n_detectors", g.n_detectors}},
                             std::nullopt, {"sinogram.json"});
      return ok;
    }

    if (mask->parsed()) {
      const auto r = io::read_raster(input);
      const Geometry g = io::geometry_from(r);
      const auto [lo, hi] = detail::parse_range(range);
      const AngularMask m = AngularMask::from_degrees(g, lo, hi);
      const Sinogram s = apply_mask(io::sinogram_from(r), m);
      io::write_raster(dir / "sinogram_limited.json", io::to_raster(s, g, m));
      detail::write_manifest(dir, "mask",
                             {{"input", input}, {"observed_degrees", {lo, hi}},
                              {"observed_views", m.observed_count()}},
                             std::nullopt, {"sinogram_limited.json"});
      out << m.observed_count() << " of " << m.size() << " views observed\n";
      return ok;
    }

    if (fbp_cmd->parsed()) {
      const auto r = io::read_raster(input);
      const Geometry g = io::geometry_from(r);
      FilterSpec f{filter == "hann" ? FilterKind::hann : FilterKind::ram_lak, cutoff};
      const Image x = fbp(io::sinogram_from(r), g, f);
      io::write_raster(dir / "fbp.json", io::to_raster(x));
      detail::write_manifest(dir, "fbp", {{"input", input}, {"filter", filter}, {"cutoff", cutoff}},
                             std::nullopt, {"fbp.json"});
      return ok;
    }

    if (complete_cmd->parsed()) {
      const auto r = io::read_raster(input);
      const Geometry g = io::geometry_from(r);
      const auto [lo, hi] = detail::parse_range(range);
      ExperimentConfig cfg;
      cfg.observed_lo_deg = lo;
      cfg.observed_hi_deg = hi;
      const AngularMask m = detail::mask_of(r, g, cfg);
      CompleterKind c = completer == "zero-fill" ? CompleterKind{ZeroFill{}} : CompleterKind{AngularInterpolation{}};
      if (!agent_cmd.empty()) c = ExternalCompleter{protocol::AgentClient::spawn(agent_cmd)};
      const Sinogram yc = complete(apply_mask(io::sinogram_from(r), m), m, c, g);
      std::vector<std::string> outputs = {"completed.json"};
      io::write_raster(dir / "completed.json", io::to_raster(yc, g));
      ojson args = {{"input", input}, {"completer", agent_cmd.empty() ? completer : "external"},
                    {"agent_cmd", agent_cmd}, {"consistent", consistent}};
      if (consistent) {
        const auto cd = enforce_consistency(yc, g);
        io::write_raster(dir / "consistent.json", io::to_raster(cd.sinogram, g));
        io::write_raster(dir / "consistent_fbp.json", io::to_raster(cd.image));
        outputs.push_back("consistent.json");
        outputs.push_back("consistent_fbp.json");
        args["moment_residual_in"] = moment_residual(yc);
        args["moment_residual_out"] = moment_residual(cd.sinogram);
      }
      detail::write_manifest(dir, "complete", args, std::nullopt, outputs);
      return ok;
    }

    if (recon->parsed()) {
      ExperimentConfig cfg = detail::load_config(config_path);
      if (!agent_cmd.empty()) {
        if (agent_role == "image") {
          cfg.image_agent.kind = "external";
          cfg.image_agent.command = agent_cmd;
        } else {
          cfg.completer = "external";
          cfg.completer_command = agent_cmd;
        }
      }
      if (recon->count("--seed")) cfg.seed = seed;
      cfg.output_dir = output;
      const auto r = io::read_raster(input);
      const Geometry g = io::geometry_from(r);
      cfg.geometry = {g.image_width, g.n_angles(), g.n_detectors, g.pixel_size};
      const AngularMask m = detail::mask_of(r, g, cfg);
      const Sinogram y = apply_mask(io::sinogram_from(r), m);
      std::optional<Image> reference;
      if (!ref.empty()) reference = io::image_from(io::read_raster(ref));

      const ResolvedAgents agents = resolve_agents(cfg);
      const CEConfig ce = ce_config(cfg, agents.image_agent);
      const MethodResult res = reconstruct(parse_method(method), y, m, agents, ce, g);

      std::vector<std::string> outputs = {"reconstruction.json"};
      io::write_raster(dir / "reconstruction.json", io::to_raster(res.x));
      detail::write_json(dir / "trace.json", detail::trace_json(res.trace));
      outputs.push_back("trace.json");
      if (reference) {
        ojson mj = detail::metrics_json(res.x, *reference);
        mj["method"] = method;
        detail::write_json(dir / "metrics.json", mj);
        outputs.push_back("metrics.json");
      }
      detail::write_manifest(dir, "reconstruct",
                             {{"input", input}, {"method", method}, {"ref", ref}, {"agent_role", agent_role}},
                             cfg, outputs);
      for (const auto& row : res.trace)
        err << "dice: iteration " << row.iteration << " mann residual " << row.mann_residual << " ("
            << row.seconds << " s)\n";
      return ok;
    }

    if (metrics_cmd->parsed()) {
      const Image x = io::image_from(io::read_raster(input));
      const Image rimg = io::image_from(io::read_raster(ref));
      const ojson mj = detail::metrics_json(x, rimg);
      if (!output.empty()) detail::write_json(output, mj);
      out << mj.dump(2) << '\n';
      return ok;
    }

    if (check->parsed()) {
      auto agent = protocol::AgentClient::spawn(agent_cmd);
      Image probe(cols, rows);
      for (std::size_t i = 0; i < probe.size(); ++i) probe.values[i] = static_cast<double>(i % 17) * 0.25;
      const Image back = agent->process_image(probe);
      double diff = 0.0;
      for (std::size_t i = 0; i < probe.size(); ++i)
        diff = std::max(diff, std::abs(back.values[i] - probe.values[i]));
      ojson report = {{"agent_cmd", agent_cmd}, {"hello", "ok"}, {"protocol_version", protocol::version},
                      {"image_shape", {rows, cols}}, {"max_abs_change", diff}};
      out << report.dump(2) << '\n';
      return ok;
    }
  } catch (const usage_error& e) {
    err << "dice: " << e.what() << '\n';
    return usage;
  } catch (const stage_error& e) {
    err << "dice: " << e.what() << '\n';
    return e.category == 0 ? numerical_failure : io_failure;
  } catch (const numerical_error& e) {
    err << "dice: " << e.what() << '\n';
    return numerical_failure;
  } catch (const std::exception& e) {
    // format, config, shape, transport and filesystem errors
    err << "dice: " << e.what() << '\n';
    return io_failure;
  }
  return usage;
}

}  // namespace dice::cli
