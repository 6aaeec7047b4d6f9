#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vsnmpc/errors.hpp"
#include "vsnmpc/simulator.hpp"

namespace vsnmpc {

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

template <int Rows>
Eigen::Matrix<double, Rows, 1> vector_or(const json& obj, const char* key, const Eigen::Matrix<double, Rows, 1>& fb) {
  if (!obj.contains(key)) return fb;
  const json& v = obj.at(key);
  Eigen::Matrix<double, Rows, 1> out;
  if (v.is_number()) {
    out.setConstant(v.get<double>());
    return out;
  }
  if (!v.is_array() || v.size() != static_cast<std::size_t>(Rows)) {
    throw ConfigError(std::string("'") + key + "' must be a number or an array of " + std::to_string(Rows));
  }
  for (int i = 0; i < Rows; ++i) {
    if (!v[static_cast<std::size_t>(i)].is_number()) throw ConfigError(std::string("'") + key + "' must be numeric");
    out[i] = v[static_cast<std::size_t>(i)].get<double>();
  }
  return out;
}

inline std::array<double, 3> triple_or(const json& obj, const char* key, const std::array<double, 3>& fb) {
  const Eigen::Vector3d v = vector_or<3>(obj, key, Eigen::Vector3d(fb[0], fb[1], fb[2]));
  return {v[0], v[1], v[2]};
}

inline DeformationMode parse_mode(const json& m) {
  const std::string type = get_or<std::string>(m, "type", "");
  if (type == "rigid_drift") {
    check_keys(m, {"type", "velocity"}, "rigid_drift");
    Eigen::Vector3d v = Eigen::Vector3d::Zero();
    const json& j = m.at("velocity");
    if (!j.is_array() || (j.size() != 2 && j.size() != 3)) throw ConfigError("rigid_drift.velocity: 2 or 3 numbers");
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
    return RigidDrift{v};
  }
  if (type == "rigid_spin") {
    check_keys(m, {"type", "rate"}, "rigid_spin");
    return RigidSpin{get_or(m, "rate", 0.0)};
  }
  if (type == "breathing") {
    check_keys(m, {"type", "amplitude", "frequency"}, "breathing");
    const Breathing b{get_or(m, "amplitude", 0.0), get_or(m, "frequency", 0.0)};
    if (!(std::abs(b.amplitude) < 1.0)) throw ConfigError("breathing amplitude must be below 1");
    return b;
  }
  if (type == "traveling_wave") {
    check_keys(m, {"type", "amplitude", "wavelength", "speed", "axis"}, "traveling_wave");
    TravelingWave w;
    w.amplitude = get_or(m, "amplitude", 0.0);
    w.wavelength = get_or(m, "wavelength", 1.0);
    w.speed = get_or(m, "speed", 0.0);
    w.axis = vector_or<2>(m, "axis", Eigen::Vector2d::UnitX());
    if (!(w.wavelength > 0.0) || !(w.axis.norm() > 0.0)) throw ConfigError("traveling_wave: bad wavelength or axis");
    return w;
  }
  throw ConfigError("unknown deformation mode type '" + type + "'");
}

inline ActuationMask parse_mask(const json& j, ScenarioMode mode) {
  if (j.is_null()) return mode == ScenarioMode::uav ? ActuationMask::uav() : ActuationMask::full();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "full") return ActuationMask::full();
    if (s == "uav") return ActuationMask::uav();
    throw ConfigError("mask must be 'full', 'uav' or six booleans");
  }
  if (!j.is_array() || j.size() != 6) throw ConfigError("mask must be 'full', 'uav' or six booleans");
  std::array<bool, 6> f{};
  for (std::size_t i = 0; i < 6; ++i) f[i] = j[i].get<bool>();
  try {
    return ActuationMask(f);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

inline Eigen::Vector4d parse_desired(const json& d) {
  if (d.is_array()) return vector_or<4>(json{{"d", d}}, "d", Eigen::Vector4d::Zero());
  check_keys(d, {"centroid", "area", "sigma_bar", "a_bar", "angle_deg"}, "desired");
  if (d.contains("area") == d.contains("sigma_bar")) throw ConfigError("desired: give exactly one of area, sigma_bar");
  if (d.contains("a_bar") && d.contains("angle_deg")) throw ConfigError("desired: give at most one of a_bar, angle_deg");
  Eigen::Vector4d x;
  x.head<2>() = vector_or<2>(d, "centroid", Eigen::Vector2d::Zero());
  if (d.contains("area")) {
    const double a = get_or(d, "area", 0.0);
    if (!(a > 0.0)) throw ConfigError("desired.area must be positive");
    x[2] = std::log(a);
  } else {
    x[2] = get_or(d, "sigma_bar", 0.0);
  }
  x[3] = d.contains("angle_deg") ? std::tan(get_or(d, "angle_deg", 0.0) * std::numbers::pi / 180.0)
                                 : get_or(d, "a_bar", 0.0);
  return x;
}

}  // namespace detail

// Parses a scenario document. Unknown keys anywhere are rejected with ConfigError.
inline ScenarioConfig parse_scenario(const json& doc) {
  using namespace detail;
  check_keys(doc, {"name", "mode", "seed", "duration", "intrinsics", "camera", "target", "desired", "controller",
                   "barriers", "disturbance", "convergence", "output"},
             "scenario");
  ScenarioConfig c;
  c.name = get_or<std::string>(doc, "name", c.name);
  const std::string mode = get_or<std::string>(doc, "mode", "free_camera");
  if (mode == "free_camera") {
    c.mode = ScenarioMode::free_camera;
  } else if (mode == "uav") {
    c.mode = ScenarioMode::uav;
  } else {
    throw ConfigError("mode must be 'free_camera' or 'uav'");
  }
  c.seed = get_or<std::uint64_t>(doc, "seed", 0);
  c.duration = get_or(doc, "duration", c.duration);

  if (doc.contains("intrinsics")) {
    const json& k = doc.at("intrinsics");
    check_keys(k, {"alpha_x", "alpha_y", "c_u", "c_v", "width", "height"}, "intrinsics");
    c.intrinsics.alpha_x = get_or(k, "alpha_x", c.intrinsics.alpha_x);
    c.intrinsics.alpha_y = get_or(k, "alpha_y", c.intrinsics.alpha_y);
    c.intrinsics.c_u = get_or(k, "c_u", c.intrinsics.c_u);
    c.intrinsics.c_v = get_or(k, "c_v", c.intrinsics.c_v);
    c.intrinsics.width = get_or(k, "width", c.intrinsics.width);
    c.intrinsics.height = get_or(k, "height", c.intrinsics.height);
  }

  if (doc.contains("camera")) {
    const json& k = doc.at("camera");
    check_keys(k, {"position", "yaw", "roll", "pitch"}, "camera");
    c.camera.position = vector_or<3>(k, "position", c.camera.position);
    c.camera.yaw = get_or(k, "yaw", 0.0);
    c.camera.roll = get_or(k, "roll", 0.0);
    c.camera.pitch = get_or(k, "pitch", 0.0);
  }

  if (!doc.contains("target")) throw ConfigError("scenario: missing 'target'");
  {
    const json& t = doc.at("target");
    check_keys(t, {"vertices", "reference_pair", "modes"}, "target");
    const json& v = t.at("vertices");
    if (!v.is_array() || v.size() < 3) throw ConfigError("target.vertices: need at least three [x, y] pairs");
    c.target.vertices.resize(2, static_cast<Eigen::Index>(v.size()));
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!v[j].is_array() || v[j].size() != 2) throw ConfigError("target.vertices: each vertex is [x, y]");
      c.target.vertices(0, static_cast<Eigen::Index>(j)) = v[j][0].get<double>();
      c.target.vertices(1, static_cast<Eigen::Index>(j)) = v[j][1].get<double>();
    }
    if (t.contains("reference_pair")) {
      const json& r = t.at("reference_pair");
      if (!r.is_array() || r.size() != 2) throw ConfigError("target.reference_pair: two indices");
      c.target.reference_pair = {r[0].get<int>(), r[1].get<int>()};
    }
    if (t.contains("modes")) {
      if (!t.at("modes").is_array()) throw ConfigError("target.modes must be an array");
      for (const auto& m : t.at("modes")) c.target.modes.push_back(parse_mode(m));
    }
  }

  if (!doc.contains("desired")) throw ConfigError("scenario: missing 'desired'");
  c.desired = parse_desired(doc.at("desired"));

  json ctl = doc.value("controller", json::object());
  check_keys(ctl, {"horizon", "dt", "Q", "R", "P", "mask", "dynamics", "solver", "local_gain", "local_damping",
                   "abar_bound"},
             "controller");
  OcpConfig& o = c.ocp;
  o.horizon = get_or(ctl, "horizon", o.horizon);
  o.dt = get_or(ctl, "dt", o.dt);
  o.Q = vector_or<4>(ctl, "Q", o.Q);
  o.R = vector_or<6>(ctl, "R", o.R);
  o.P = vector_or<4>(ctl, "P", Eigen::Vector4d(10.0 * o.Q));
  o.mask = parse_mask(ctl.value("mask", json()), c.mode);
  const std::string dyn = get_or<std::string>(ctl, "dynamics", "chain_rule");
  if (dyn == "chain_rule") {
    o.dynamics = DynamicsMode::chain_rule;
  } else if (dyn == "closed_form") {
    o.dynamics = DynamicsMode::closed_form;
  } else {
    throw ConfigError("controller.dynamics must be 'chain_rule' or 'closed_form'");
  }
  if (ctl.contains("solver")) {
    const json& s = ctl.at("solver");
    check_keys(s, {"max_iterations", "gradient_tolerance", "armijo_c1", "backtrack", "max_backtracks", "fd_step"},
               "controller.solver");
    o.solver.max_iterations = get_or(s, "max_iterations", o.solver.max_iterations);
    o.solver.gradient_tolerance = get_or(s, "gradient_tolerance", o.solver.gradient_tolerance);
    o.solver.armijo_c1 = get_or(s, "armijo_c1", o.solver.armijo_c1);
    o.solver.backtrack = get_or(s, "backtrack", o.solver.backtrack);
    o.solver.max_backtracks = get_or(s, "max_backtracks", o.solver.max_backtracks);
    o.solver.fd_step = get_or(s, "fd_step", o.solver.fd_step);
  }
  o.local_gain = get_or(ctl, "local_gain", o.local_gain);
  o.local_damping = get_or(ctl, "local_damping", o.local_damping);
  c.abar_bound = get_or(ctl, "abar_bound", c.abar_bound);

  json bar = doc.value("barriers", json::object());
  check_keys(bar, {"gamma", "sigma_min", "sigma_max", "delta", "nu_max", "omega_max"}, "barriers");
  o.constraints.visibility.gamma = get_or(bar, "gamma", o.constraints.visibility.gamma);
  o.constraints.area.sigma_min = get_or(bar, "sigma_min", o.constraints.area.sigma_min);
  o.constraints.area.sigma_max = get_or(bar, "sigma_max", o.constraints.area.sigma_max);
  o.constraints.area.delta = get_or(bar, "delta", o.constraints.area.delta);
  o.limits.nu_max = triple_or(bar, "nu_max", o.limits.nu_max);
  o.limits.omega_max = triple_or(bar, "omega_max", o.limits.omega_max);

  json dist = doc.value("disturbance", json::object());
  check_keys(dist, {"bound", "seed"}, "disturbance");
  c.disturbance.bound = get_or(dist, "bound", 0.0);
  c.disturbance.seed = get_or<std::uint64_t>(dist, "seed", 0);

  json conv = doc.value("convergence", json::object());
  check_keys(conv, {"window", "centroid_halfwidth_frac", "sigma", "angle_deg", "barrier_tolerance"}, "convergence");
  c.convergence.window = get_or(conv, "window", c.convergence.window);
  c.convergence.centroid_halfwidth_frac = get_or(conv, "centroid_halfwidth_frac", c.convergence.centroid_halfwidth_frac);
  c.convergence.sigma = get_or(conv, "sigma", c.convergence.sigma);
  c.convergence.angle_deg = get_or(conv, "angle_deg", c.convergence.angle_deg);
  c.convergence.barrier_tolerance = get_or(conv, "barrier_tolerance", c.convergence.barrier_tolerance);

  json out = doc.value("output", json::object());
  check_keys(out, {"dir", "plots"}, "output");
  c.output.dir = get_or<std::string>(out, "dir", c.output.dir);
  c.output.plots = get_or(out, "plots", c.output.plots);

  c.finalize();
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read " + path);
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct LoadedScenario {
  ScenarioConfig config;
  json document;
};

inline LoadedScenario load_scenario(const std::string& path, std::optional<std::uint64_t> seed_override = {}) {
  LoadedScenario s;
  s.document = read_json_file(path);
  if (seed_override) {
    if (!s.document.is_object()) throw ConfigError(path + ": expected an object");
    s.document["seed"] = *seed_override;
  }
  try {
    s.config = parse_scenario(s.document);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

// FNV-1a over the compact dump of the document (keys are sorted by the json library).
inline std::string config_hash(const json& doc) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct BatchEntry {
  std::string scenario_path;
  std::uint64_t seed = 0;
  std::string session_name;
};

struct BatchSpec {
  std::string name = "batch";
  std::vector<std::string> scenarios;
  int repetitions = 1;
  std::uint64_t seed_base = 1;
  std::string output_dir = "out/batch";

  // Seeds are seed_base, seed_base + 1, ... per scenario.
  std::vector<BatchEntry> sessions() const {
    std::vector<BatchEntry> out;
    std::set<std::string> names;
    for (const auto& path : scenarios) {
      const std::string stem = std::filesystem::path(path).stem().string();
      for (int r = 0; r < repetitions; ++r) {
        BatchEntry e{path, seed_base + static_cast<std::uint64_t>(r), stem + "_s" + std::to_string(seed_base + r)};
        if (!names.insert(e.session_name).second) throw ConfigError("duplicate session output name " + e.session_name);
        out.push_back(std::move(e));
      }
    }
    return out;
  }
};

// Scenario paths are resolved relative to the batch file.
inline BatchSpec load_batch(const std::string& path) {
  const json doc = read_json_file(path);
  detail::check_keys(doc, {"name", "scenarios", "repetitions", "seed_base", "output_dir"}, "batch");
  BatchSpec b;
  try {
    b.name = doc.value("name", b.name);
    b.repetitions = doc.value("repetitions", b.repetitions);
    b.seed_base = doc.value("seed_base", b.seed_base);
    b.output_dir = doc.value("output_dir", b.output_dir);
    const auto base = std::filesystem::path(path).parent_path();
    for (const auto& s : doc.at("scenarios")) {
      const std::filesystem::path p(s.get<std::string>());
      b.scenarios.push_back((p.is_absolute() ? p : base / p).lexically_normal().string());
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (b.scenarios.empty()) throw ConfigError("batch: no scenarios");
  if (b.repetitions < 1) throw ConfigError("batch: repetitions must be positive");
  b.sessions();
  return b;
}

}  // namespace vsnmpc
