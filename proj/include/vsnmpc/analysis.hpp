#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vsnmpc/errors.hpp"
#include "vsnmpc/scenario.hpp"
#include "vsnmpc/simulator.hpp"
#include "vsnmpc/svg.hpp"

namespace vsnmpc {

inline constexpr int kMinWindowSamples = 10;

struct SteadyStateError {
  double ex = 0.0;  // normalized
  double ey = 0.0;
  double ex_px = 0.0;
  double ey_px = 0.0;
  double esig = 0.0;
  double eang_deg = 0.0;
  double min_L1 = 0.0;  // over the window
  double min_L2 = 0.0;
  int samples = 0;
};

// Mean absolute error over the trailing `window` fraction of the log.
inline SteadyStateError steady_state_error(const std::vector<SimRecord>& records, double window,
                                           const CameraIntrinsics& k = {}) {
  if (!(window > 0.0 && window <= 1.0)) throw InvalidArgument("window must be in (0, 1]");
  const int n = static_cast<int>(records.size());
  const int w = std::min(n, static_cast<int>(std::lround(window * n)));
  if (w < kMinWindowSamples) throw ShortRun("steady-state window has fewer than 10 samples");
  SteadyStateError e;
  e.samples = w;
  e.min_L1 = e.min_L2 = std::numeric_limits<double>::infinity();
  for (int i = n - w; i < n; ++i) {
    const SimRecord& r = records[static_cast<std::size_t>(i)];
    e.ex += std::abs(r.err[0]);
    e.ey += std::abs(r.err[1]);
    e.esig += std::abs(r.err[2]);
    e.eang_deg += std::abs(r.angle_err_deg);
    e.min_L1 = std::min(e.min_L1, r.L1);
    e.min_L2 = std::min(e.min_L2, r.L2);
  }
  e.ex /= w;
  e.ey /= w;
  e.esig /= w;
  e.eang_deg /= w;
  e.ex_px = e.ex * k.alpha_x;
  e.ey_px = e.ey * k.alpha_y;
  return e;
}

inline SteadyStateError steady_state_error(const SimLog& log, double window, const CameraIntrinsics& k = {}) {
  return steady_state_error(log.records, window, k);
}

struct ConvergenceReport {
  SteadyStateError sse;
  bool centroid_ok = false;
  bool sigma_ok = false;
  bool angle_ok = false;
  bool barriers_ok = false;  // near 1 in the window
  bool safe = false;         // L1, L2 > 0 at every step
  bool completed = false;    // not aborted
  bool converged = false;
  std::string failure;       // first failing item, empty when converged
};

inline ConvergenceReport evaluate_convergence(const SimLog& log, const ScenarioConfig& cfg) {
  ConvergenceReport r;
  r.completed = !log.aborted;
  r.safe = std::all_of(log.records.begin(), log.records.end(), [](const SimRecord& s) { return s.L1 > 0.0 && s.L2 > 0.0; });
  try {
    r.sse = steady_state_error(log, cfg.convergence.window, cfg.intrinsics);
  } catch (const ShortRun&) {
    r.failure = "run too short for the steady-state window";
    return r;
  }
  const double half_width = 0.5 * cfg.intrinsics.fov().width();
  const double tol = cfg.convergence.centroid_halfwidth_frac * half_width;
  r.centroid_ok = r.sse.ex <= tol && r.sse.ey <= tol;
  r.sigma_ok = r.sse.esig <= cfg.convergence.sigma;
  r.angle_ok = r.sse.eang_deg <= cfg.convergence.angle_deg;
  r.barriers_ok = r.sse.min_L1 >= 1.0 - cfg.convergence.barrier_tolerance &&
                  r.sse.min_L2 >= 1.0 - cfg.convergence.barrier_tolerance;
  r.converged = r.completed && r.safe && r.centroid_ok && r.sigma_ok && r.angle_ok && r.barriers_ok;
  if (!r.completed) r.failure = "aborted: " + log.abort_reason;
  else if (!r.safe) r.failure = "constraint value reached zero";
  else if (!r.centroid_ok) r.failure = "centroid error above threshold";
  else if (!r.sigma_ok) r.failure = "area error above threshold";
  else if (!r.angle_ok) r.failure = "angle error above threshold";
  else if (!r.barriers_ok) r.failure = "constraint values not settled near 1";
  return r;
}

// Parses a log written by write_csv (header must match).
inline std::vector<SimRecord> read_csv_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path);
  std::string line;
  std::getline(f, line);
  if (line != kCsvHeader) throw Error(path + ": unexpected header");
  std::vector<SimRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 20) throw Error(path + ": malformed row");
    SimRecord r;
    r.t = v[0];
    for (int i = 0; i < 4; ++i) r.x[i] = v[static_cast<std::size_t>(1 + i)];
    for (int i = 0; i < 3; ++i) r.err[i] = v[static_cast<std::size_t>(5 + i)];
    r.angle_err_deg = v[8];
    r.L1 = v[9];
    r.L2 = v[10];
    for (int i = 0; i < 6; ++i) r.nu[i] = v[static_cast<std::size_t>(11 + i)];
    r.cost = v[17];
    r.iterations = static_cast<int>(v[18]);
    r.feasible = v[19] != 0.0;
    out.push_back(r);
  }
  return out;
}

struct VariableStats {
  std::string name;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;  // population
};

struct SessionStats {
  std::vector<VariableStats> variables;  // ex, ey, ex_px, ey_px, esig, eang_deg
  int sessions = 0;
};

inline VariableStats summarize(const std::string& name, const std::vector<double>& v) {
  VariableStats s;
  s.name = name;
  if (v.empty()) return s;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(v.size()));
  // Keep min <= mean <= max despite rounding of the sum.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

inline SessionStats aggregate(const std::vector<SteadyStateError>& errors) {
  SessionStats st;
  st.sessions = static_cast<int>(errors.size());
  auto column = [&](auto member) {
    std::vector<double> v;
    for (const auto& e : errors) v.push_back(e.*member);
    return v;
  };
  st.variables.push_back(summarize("ex", column(&SteadyStateError::ex)));
  st.variables.push_back(summarize("ey", column(&SteadyStateError::ey)));
  st.variables.push_back(summarize("ex_px", column(&SteadyStateError::ex_px)));
  st.variables.push_back(summarize("ey_px", column(&SteadyStateError::ey_px)));
  st.variables.push_back(summarize("esig", column(&SteadyStateError::esig)));
  st.variables.push_back(summarize("eang_deg", column(&SteadyStateError::eang_deg)));
  return st;
}

inline std::string stats_csv(const SessionStats& st) {
  std::ostringstream os;
  os << "variable,mean,min,max,std,sessions\n";
  for (const auto& v : st.variables) {
    os << v.name << ',' << format_number(v.mean) << ',' << format_number(v.min) << ',' << format_number(v.max) << ','
       << format_number(v.std) << ',' << st.sessions << '\n';
  }
  return os.str();
}

inline std::string stats_svg(const std::string& title, const SessionStats& st) {
  std::vector<svg::Bar> bars;
  for (const auto& v : st.variables) {
    if (v.name == "ex" || v.name == "ey") continue;  // pixel versions are plotted instead
    bars.push_back({v.name, v.mean, v.std, v.min, v.max});
  }
  return svg::bar_chart(title, bars);
}

inline std::string error_plot_svg(const SimLog& log) {
  std::vector<double> t;
  std::vector<double> ex, ey, es, ea, l1, l2;
  for (const auto& r : log.records) {
    t.push_back(r.t);
    ex.push_back(r.err[0]);
    ey.push_back(r.err[1]);
    es.push_back(r.err[2]);
    ea.push_back(r.angle_err_deg);
    l1.push_back(r.L1);
    l2.push_back(r.L2);
  }
  std::vector<svg::Panel> panels{
      {"centroid error [normalized]", {{"ex", ex, "#1f77b4"}, {"ey", ey, "#d62728"}}, {0.0}},
      {"log-area error", {{"esig", es, "#2ca02c"}}, {0.0}},
      {"angle error [deg]", {{"eang", ea, "#9467bd"}}, {0.0}},
      {"constraint values", {{"L1", l1, "#ff7f0e"}, {"L2", l2, "#17becf"}}, {1.0}},
  };
  return svg::line_panels(log.name, t, panels);
}

inline json diagnostics_json(const DiagnosticsBundle& d) {
  return json{{"L_f", d.L_f},
              {"L_f_empirical", d.L_f_empirical},
              {"L_F", d.L_F},
              {"L_E", d.L_E},
              {"L_FV_empirical", d.L_FV_empirical},
              {"L_h", d.L_h},
              {"L_zm", d.L_zm},
              {"F_lower", d.F_lower},
              {"eps0", d.eps0},
              {"a_eps", d.a_eps},
              {"a_eps_f", d.a_eps_f},
              {"xi_max", d.xi_max.value},
              {"xi_max_per_m", d.xi_max.per_m},
              {"xi_max_empirical", d.xi_max_empirical.value}};
}

inline json sidecar_json(const SimLog& log, const ScenarioConfig& cfg, const std::string& hash,
                         const ConvergenceReport& rep) {
  json s{{"steps", log.records.size()},
         {"aborted", log.aborted},
         {"abort_reason", log.abort_reason},
         {"recovery_steps", log.recovery_steps},
         {"infeasible_starts", log.infeasible_starts},
         {"converged", rep.converged},
         {"failure", rep.failure}};
  if (rep.sse.samples > 0) {
    s["steady_state"] = {{"ex", rep.sse.ex},     {"ey", rep.sse.ey},         {"ex_px", rep.sse.ex_px},
                         {"ey_px", rep.sse.ey_px}, {"esig", rep.sse.esig},   {"eang_deg", rep.sse.eang_deg},
                         {"min_L1", rep.sse.min_L1}, {"min_L2", rep.sse.min_L2}, {"samples", rep.sse.samples}};
  }
  return json{{"name", log.name},
              {"seed", cfg.seed},
              {"config_hash", hash},
              {"diagnostics", diagnostics_json(log.diagnostics)},
              {"summary", s}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << text;
}

struct RunArtifacts {
  std::filesystem::path csv;
  std::filesystem::path sidecar;
  std::filesystem::path plot;  // empty when plots are off
};

inline RunArtifacts write_run(const SimLog& log, const ScenarioConfig& cfg, const std::string& hash,
                              const ConvergenceReport& rep, const std::filesystem::path& dir, const std::string& stem,
                              bool plots) {
  std::filesystem::create_directories(dir);
  RunArtifacts a;
  a.csv = dir / (stem + ".csv");
  a.sidecar = dir / (stem + ".json");
  write_text(a.csv, to_csv(log));
  write_text(a.sidecar, sidecar_json(log, cfg, hash, rep).dump(2) + "\n");
  if (plots) {
    a.plot = dir / (stem + "_errors.svg");
    write_text(a.plot, error_plot_svg(log));
  }
  return a;
}

struct SessionOutcome {
  BatchEntry entry;
  bool ran = false;  // false on config error
  bool aborted = false;
  bool converged = false;
  std::string message;
  SteadyStateError sse;
  bool has_sse = false;
};

struct BatchResult {
  std::vector<SessionOutcome> sessions;
  SessionStats stats;  // over sessions with a steady-state value
  int converged = 0;

  double converged_fraction() const {
    return sessions.empty() ? 0.0 : static_cast<double>(converged) / static_cast<double>(sessions.size());
  }
};

// Runs every session on up to `jobs` threads. Steady-state errors are recomputed from the
// CSVs just written so the aggregate is reproducible from the files alone.
inline BatchResult run_batch(const BatchSpec& spec, int jobs, const std::filesystem::path& out_dir) {
  const auto entries = spec.sessions();
  BatchResult res;
  res.sessions.resize(entries.size());
  std::filesystem::create_directories(out_dir);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      SessionOutcome& o = res.sessions[i];
      o.entry = entries[i];
      try {
        const LoadedScenario sc = load_scenario(o.entry.scenario_path, o.entry.seed);
        const SimLog log = run_scenario(sc.config);
        const ConvergenceReport rep = evaluate_convergence(log, sc.config);
        const RunArtifacts art =
            write_run(log, sc.config, config_hash(sc.document), rep, out_dir, o.entry.session_name, false);
        o.ran = true;
        o.aborted = log.aborted;
        o.converged = rep.converged;
        o.message = rep.failure;
        try {
          o.sse = steady_state_error(read_csv_records(art.csv.string()), sc.config.convergence.window,
                                     sc.config.intrinsics);
          o.has_sse = true;
        } catch (const ShortRun&) {
        }
      } catch (const std::exception& e) {
        o.message = e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(entries.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::vector<SteadyStateError> errs;
  for (const auto& o : res.sessions) {
    if (o.converged) ++res.converged;
    if (o.has_sse) errs.push_back(o.sse);
  }
  res.stats = aggregate(errs);
  return res;
}

inline std::string sessions_csv(const BatchResult& r) {
  std::ostringstream os;
  os << "session,seed,ran,aborted,converged,ex,ey,ex_px,ey_px,esig,eang_deg,message\n";
  for (const auto& o : r.sessions) {
    std::string msg = o.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    os << o.entry.session_name << ',' << o.entry.seed << ',' << o.ran << ',' << o.aborted << ',' << o.converged;
    if (o.has_sse) {
      for (double v : {o.sse.ex, o.sse.ey, o.sse.ex_px, o.sse.ey_px, o.sse.esig, o.sse.eang_deg})
        os << ',' << format_number(v);
    } else {
      os << ",,,,,,";
    }
    os << ',' << msg << '\n';
  }
  return os.str();
}

}  // namespace vsnmpc
