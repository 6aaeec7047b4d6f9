// vsnmpc: run visual-servoing scenarios, batches and diagnostics from JSON files.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "vsnmpc/vsnmpc.hpp"

namespace fs = std::filesystem;
using namespace vsnmpc;

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kAbort = 2, kNotConverged = 3 };

// --out beats the environment, which beats the config file.
std::string output_dir(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("VSNMPC_OUT_DIR"); env && *env) return env;
  return from_config;
}

int cmd_run(const std::string& path, const std::string& out_flag, bool no_plots, std::optional<std::uint64_t> seed) {
  LoadedScenario sc;
  try {
    sc = load_scenario(path, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }
  SimLog log;
  try {
    log = run_scenario(sc.config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }
  const ConvergenceReport rep = evaluate_convergence(log, sc.config);
  const fs::path dir = output_dir(out_flag, sc.config.output.dir);
  const bool plots = sc.config.output.plots && !no_plots;
  RunArtifacts art;
  try {
    art = write_run(log, sc.config, config_hash(sc.document), rep, dir, sc.config.name, plots);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAbort;
  }
  std::printf("%s: %zu steps, %.2f s wall\n", sc.config.name.c_str(), log.records.size(), log.wall_time_s);
  if (rep.sse.samples > 0) {
    std::printf("steady state: ex=%.3g ey=%.3g (%.2f, %.2f px) esig=%.3g eang=%.3g deg  min L1=%.4f L2=%.4f\n",
                rep.sse.ex, rep.sse.ey, rep.sse.ex_px, rep.sse.ey_px, rep.sse.esig, rep.sse.eang_deg, rep.sse.min_L1,
                rep.sse.min_L2);
  }
  std::printf("csv: %s\n", art.csv.string().c_str());
  if (log.aborted) {
    std::cerr << "aborted: " << log.abort_reason << "\n";
    return kAbort;
  }
  if (!rep.converged) {
    std::printf("not converged: %s\n", rep.failure.c_str());
    return kNotConverged;
  }
  std::printf("converged\n");
  return kOk;
}

int cmd_batch(const std::string& path, int jobs, const std::string& out_flag) {
  BatchSpec spec;
  try {
    spec = load_batch(path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const fs::path dir = output_dir(out_flag, spec.output_dir);
  const BatchResult res = run_batch(spec, jobs, dir);
  write_text(dir / "sessions.csv", sessions_csv(res));
  write_text(dir / "aggregate.csv", stats_csv(res.stats));
  write_text(dir / "summary.svg", stats_svg(spec.name + " steady-state errors", res.stats));
  for (const auto& o : res.sessions) {
    if (!o.converged) std::printf("%s: %s\n", o.entry.session_name.c_str(), o.message.c_str());
  }
  std::printf("%d/%zu sessions converged\n", res.converged, res.sessions.size());
  for (const auto& v : res.stats.variables) {
    std::printf("  %-9s mean=%.4g min=%.4g max=%.4g std=%.4g\n", v.name.c_str(), v.mean, v.min, v.max, v.std);
  }
  return res.converged_fraction() >= 0.9 ? kOk : kAbort;
}

int cmd_diagnose(const std::string& path) {
  LoadedScenario sc;
  try {
    sc = load_scenario(path);
    ScenarioConfig cfg = sc.config;
    const CameraPose pose = CameraPose::level(cfg.camera.position, cfg.camera.yaw, cfg.camera.roll, cfg.camera.pitch);
    const DeformableTarget target(cfg.target.vertices, cfg.target.modes, cfg.seed);
    const Measurement m =
        measure(pose, target.sample(0.0), cfg.intrinsics, cfg.target.reference_pair, Eigen::Vector4d::Zero());
    const MomentState x_des{cfg.desired};
    const DiagnosticsBundle d = compute_diagnostics(cfg.ocp, x_des, polygon_at(x_des, m.polygon), m.depth, cfg.abar_bound);
    json out = diagnostics_json(d);
    out["config_hash"] = config_hash(sc.document);
    out["initial_depth"] = m.depth.z;
    std::cout << out.dump(2) << "\n";
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Barrier-constrained NMPC visual servoing of deformable polygon targets"};
  app.set_version_flag("--version", std::string("vsnmpc ") + kVersion);
  app.require_subcommand(1);

  std::string run_path, out_dir;
  bool no_plots = false;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "run one scenario");
  run->add_option("config", run_path, "scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (overrides VSNMPC_OUT_DIR and the config)");
  run->add_flag("--no-plots", no_plots, "skip SVG plots");
  run->add_option("--seed", seed, "override the scenario seed");

  std::string batch_path, batch_out;
  int jobs = 0;
  auto* batch = app.add_subcommand("batch", "run a batch of scenarios and aggregate statistics");
  batch->add_option("spec", batch_path, "batch JSON")->required()->check(CLI::ExistingFile);
  batch->add_option("--jobs", jobs, "worker threads (default: hardware concurrency)");
  batch->add_option("--out", batch_out, "output directory");

  std::string diag_path;
  auto* diag = app.add_subcommand("diagnose", "print Lipschitz and terminal-set diagnostics");
  diag->add_option("config", diag_path, "scenario JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfig;
  }

  try {
    if (*run) return cmd_run(run_path, out_dir, no_plots, seed);
    if (*batch) return cmd_batch(batch_path, jobs, batch_out);
    if (*diag) return cmd_diagnose(diag_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAbort;
  }
  return kConfig;
}
