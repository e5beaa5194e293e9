// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include <sys/wait.h>

#include <Eigen/Dense>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "dice/ce_solver.hpp"
#include "dice/metrics.hpp"
#include "dice/phantom.hpp"

using namespace dice;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Image uniform_image(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Image img(n, n);
  for (double& v : img.values) v = u(rng);
  return img;
}

Sinogram uniform_sinogram(const Geometry& g, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Sinogram s(g);
  for (double& v : s.values) v = u(rng);
  return s;
}

Outcome adjoint() {
  const auto t0 = clk::now();
  const Geometry g = parallel_geometry(32, 90, 64);
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Image x = uniform_image(32, rng, -1, 1);
    const Sinogram y = uniform_sinogram(g, rng, -1, 1);
    const Sinogram ax = forward_project(x, g);
    const double gap = std::abs(detail::dot(ax.values, y.values) - detail::dot(x.values, back_project(y, g).values));
    worst = std::max(worst, gap / (detail::norm(ax.values) * detail::norm(y.values)));
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-6 && t < 5.0, fmt("worst relative gap %.2e (limit 1e-6), %.2f s (limit 5 s)", worst, t)};
}

Outcome fbp_fidelity() {
  const Image ph = shepp_logan(256);
  const Geometry g = parallel_geometry(256, 720);
  const auto t0 = clk::now();
  const Image x = fbp(forward_project(ph, g), g);
  const double t = seconds_since(t0);
  const double err = rmse(x, ph, inscribed_disk(ph)) / detail::dynamic_range(ph);
  return {err <= 0.05 && t < 10.0,
          fmt("interior RMSE %.2f%% of range (limit 5%%), %.2f s (limit 10 s)", 100 * err, t)};
}

Outcome prox_oracle() {
  const Geometry g = parallel_geometry(16, 12, 24);
  std::mt19937_64 rng(7);
  const Image v = uniform_image(16, rng, -0.2, 1.0);
  const Sinogram y = forward_project(uniform_image(16, rng, 0.0, 1.0), g);
  const DataWeights W = build_weights(y);
  const DataAgentConfig cfg{1.0, 200, 0.0, false};
  const Image x = prox_data(v, y, W, cfg, g).x;

  Eigen::MatrixXd A(g.sinogram_size(), 256);
  for (std::size_t p = 0; p < 256; ++p) {
    Image e(16, 16);
    e.values[p] = 1.0;
    const Sinogram col = forward_project(e, g);
    for (std::size_t i = 0; i < col.values.size(); ++i) A(Eigen::Index(i), Eigen::Index(p)) = col.values[i];
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.values.data(), Eigen::Index(y.values.size()));
  const Eigen::Map<const Eigen::VectorXd> vv(v.values.data(), 256);
  const Eigen::MatrixXd H = A.transpose() * A + Eigen::MatrixXd::Identity(256, 256) / cfg.sigma2;
  const Eigen::VectorXd ref = H.llt().solve(A.transpose() * yv + vv / cfg.sigma2);
  const Eigen::Map<const Eigen::VectorXd> xv(x.values.data(), 256);
  const double rel = (xv - ref).norm() / ref.norm();
  return {rel <= 1e-4, fmt("relative difference to dense solve %.2e (limit 1e-4), sigma2 = 1", rel)};
}

Outcome consistency() {
  const std::size_t n = 256;
  const Geometry g = parallel_geometry(n, 720);
  const AngularMask m = AngularMask::from_degrees(g, 0, 90);
  std::mt19937_64 rng(99);

  std::vector<std::pair<std::string, Sinogram>> inputs;
  const Image ph = shepp_logan(n);
  inputs.emplace_back("completed shepp-logan",
                      complete(apply_mask(forward_project(ph, g), m), m, AngularInterpolation{}, g));
  Sinogram wobbly = forward_project(rasterize(random_ellipse_scene(n, 5)), g);
  for (std::size_t a = 0; a < g.n_angles(); ++a)
    for (double& v : wobbly.row(a)) v *= 1.0 + 0.2 * std::sin(6.0 * g.angles[a]);
  inputs.emplace_back("20% view-mass wobble", wobbly);
  inputs.emplace_back("zero-filled limited data", apply_mask(forward_project(ph, g), m));
  inputs.emplace_back("uniform noise", uniform_sinogram(g, rng, 0.0, 1.0));

  bool pass = true;
  double worst_moment = 0.0, worst_idem = 0.0, worst_time = 0.0;
  std::string per_input;
  for (const auto& [name, y] : inputs) {
    const auto t0 = clk::now();
    const Sinogram once = enforce_consistency(y, g).sinogram;
    worst_time = std::max(worst_time, seconds_since(t0));
    worst_moment = std::max(worst_moment, moment_residual(once));
    const Sinogram twice = enforce_consistency(once, g).sinogram;
    const double idem = detail::diff_norm(twice.values, once.values) / detail::norm(once.values);
    worst_idem = std::max(worst_idem, idem);
    per_input += fmt("%s%s %.2f%%", per_input.empty() ? "" : ", ", name.c_str(), 100 * idem);
  }
  pass = worst_moment <= 0.01 && worst_idem <= 0.01 && worst_time < 10.0;
  return {pass, fmt("max moment residual %.2e (limit 1e-2), idempotence change (limit 1%%) %s; "
                    "%.2f s per cycle (limit 10 s)",
                    worst_moment, per_input.c_str(), worst_time)};
}

Outcome ce_algebra() {
  std::mt19937_64 rng(17);
  const std::vector<double> mu = {0.6, 0.4};
  bool idem = true, zero_rho = true, identity_fixed = true;
  double involution = 0.0;
  for (int i = 0; i < 20; ++i) {
    const AgentStack z{{uniform_image(24, rng, -1, 1), uniform_image(24, rng, -1, 1)}};
    const AgentStack g1 = average_op(z, mu), g2 = average_op(g1, mu);
    idem = idem && g1[0].values == g2[0].values && g1[1].values == g2[1].values;
    const AgentStack back = reflect_average(reflect_average(z, mu), mu);
    involution = std::max(involution, stack_distance(back, z) / z.norm());

    auto scale = [](std::size_t, const Image& v) {
      Image o = v;
      for (double& x : o.values) x *= 0.5;
      return o;
    };
    const auto [still, r0] = mann_step(z, 0.0, mu, scale);
    zero_rho = zero_rho && still[0].values == z[0].values && still[1].values == z[1].values;

    const AgentStack consensus = AgentStack::replicate(uniform_image(24, rng, -1, 1));
    const auto [same, r1] = mann_step(consensus, 0.25, mu, [](std::size_t, const Image& v) { return v; });
    identity_fixed = identity_fixed && r1.mann_residual == 0.0 && same[0].values == consensus[0].values;
  }
  const bool pass = idem && zero_rho && identity_fixed && involution <= 1e-12;
  return {pass, fmt("G idempotent bitwise: %s; (2G-I)^2 error %.1e (limit 1e-12); identity agents Mann residual 0: "
                    "%s; rho = 0 bitwise identity: %s",
                    idem ? "yes" : "no", involution, identity_fixed ? "yes" : "no", zero_rho ? "yes" : "no")};
}

Outcome equilibrium() {
  const std::size_t n = 64;
  const Image ph = shepp_logan(n);
  const Geometry g = parallel_geometry(n, 180);
  const AngularMask m = AngularMask::from_degrees(g, 0, 90);
  CEConfig cfg;
  cfg.outer_iters = 100;
  cfg.data_cfg = {1e-2, 50, 1e-12, true};
  const DiceResult res = dice_reconstruct(apply_mask(forward_project(ph, g), m), m, AngularInterpolation{}, cfg, g);
  const DataTerm data{res.y_consistent, build_weights(res.y_consistent), g};
  const CEResiduals r = ce_residuals(res.z, cfg.mu, DiceAgents{data, cfg.data_cfg, cfg.image_agent});
  const double worst = std::max(r.agent[0], r.agent[1]);
  return {worst <= 1e-3 && r.balance <= 1e-3,
          fmt("agent residuals %.2e, %.2e; balance %.2e (limit 1e-3) after 100 Mann iterations, sigma2 = 1e-2",
              r.agent[0], r.agent[1], r.balance)};
}

Outcome end_to_end() {
  const auto t0 = clk::now();
  const std::size_t n = 256;
  const Geometry g = parallel_geometry(n, 720);
  const AngularMask m = AngularMask::from_degrees(g, 0, 90);
  const CEConfig cfg;  // rho 0.25, mu (0.6, 0.4), sigma2 1e-8, 4 outer, 20 CG, TV agent
  int dice_wins = 0, dc_wins = 0;
  double sum_fbp = 0, sum_dc = 0, sum_dice = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Image truth = rasterize(random_ellipse_scene(n, seed));
    const Sinogram y = apply_mask(forward_project(truth, g), m);
    const double e_fbp = rmse(fbp(y, g), truth);
    const DiceResult res = dice_reconstruct(y, m, AngularInterpolation{}, cfg, g);
    const double e_dc = rmse(res.x_fbp, truth);  // FBP of the completed data
    const double e_dice = rmse(res.x, truth);
    dice_wins += e_dice < e_fbp;
    dc_wins += e_dc < e_fbp;
    sum_fbp += e_fbp;
    sum_dc += e_dc;
    sum_dice += e_dice;
  }
  const double t = seconds_since(t0);
  const HuConvention hu;
  return {dice_wins >= 18 && dc_wins >= 18 && t < 600.0,
          fmt("DICE beats FBP on %d/20, DC+FBP beats FBP on %d/20 (need 18); mean RMSE FBP %.1f HU, DC+FBP %.1f "
              "HU, DICE %.1f HU; %.0f s (limit 600 s)",
              dice_wins, dc_wins, hu.scale_error(sum_fbp / 20), hu.scale_error(sum_dc / 20),
              hu.scale_error(sum_dice / 20), t)};
}

int sh(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    out[e.path().filename().string()] = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return out;
}

Outcome determinism(const fs::path& work) {
  const std::string bin = std::string("'") + DICE_CLI + "'";
  const fs::path d = work / "determinism";
  fs::remove_all(d);
  fs::create_directories(d);
  const auto p = [&](const char* rel) { return "'" + (d / rel).string() + "'"; };
  std::ofstream(d / "config.json") << R"({"seed": 42, "ce": {"outer_iters": 4}})";
  if (sh(bin + " phantom --kind random-ellipses --seed 42 --n 128 -o " + p("p")) != 0 ||
      sh(bin + " project -i " + p("p/phantom.json") + " --n-angles 360 -o " + p("s")) != 0 ||
      sh(bin + " mask -i " + p("s/sinogram.json") + " --observed-deg 0:90 -o " + p("m")) != 0)
    return {false, "could not prepare inputs through the CLI"};
  const std::string recon = bin + " reconstruct -i " + p("m/sinogram_limited.json") + " --config " +
                            p("config.json") + " --ref " + p("p/phantom.json") + " --method dice -o " + p("r");
  if (sh(recon) != 0) return {false, "first reconstruct run failed"};
  const auto first = snapshot(d / "r");
  if (sh(recon) != 0) return {false, "second reconstruct run failed"};
  const auto second = snapshot(d / "r");
  const bool same = first == second && !first.empty();
  return {same, fmt("%zu output files, %s across two runs", first.size(), same ? "bitwise identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "dice_acceptance").string();
  std::vector<std::string> only;
  app.add_option("--workdir", workdir, "Scratch directory");
  app.add_option("--only", only, "Run only the named criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"adjoint", adjoint},
      {"fbp-fidelity", fbp_fidelity},
      {"prox-oracle", prox_oracle},
      {"consistency-cycle", consistency},
      {"ce-algebra", ce_algebra},
      {"equilibrium", equilibrium},
      {"end-to-end-20-scenes", end_to_end},
      {"determinism", [&] { return determinism(workdir); }},
  };

  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << "(" << failed << " failing)" << std::endl;
  return failed;
}
