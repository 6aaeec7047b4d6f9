#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "vsnmpc/barriers.hpp"
#include "vsnmpc/camera.hpp"
#include "vsnmpc/diagnostics.hpp"
#include "vsnmpc/errors.hpp"
#include "vsnmpc/nmpc.hpp"
#include "vsnmpc/polygon.hpp"
#include "vsnmpc/target.hpp"

namespace vsnmpc {

enum class ScenarioMode { free_camera, uav };

// Camera-to-world pose. World is z-up; the camera optical axis is its own +z.
struct CameraPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();

  RigidTransform transform() const { return {rotation, position}; }

  // Downward-looking camera at `yaw`, tilted by body roll (x) then pitch (y).
  static CameraPose level(const Eigen::Vector3d& position, double yaw, double roll = 0.0, double pitch = 0.0) {
    const Eigen::Matrix3d flip = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
    const Eigen::Matrix3d tilt =
        (Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()) * Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()))
            .toRotationMatrix();
    CameraPose p;
    p.rotation = flip * Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix() * tilt.transpose();
    p.position = position;
    return p;
  }
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d k;
  k << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return k;
}

// Applies a constant body-frame twist for dt through the SE(3) exponential.
inline CameraPose integrate_pose(const CameraPose& pose, const CameraVelocity& nu, double dt) {
  const Eigen::Vector3d phi = nu.angular() * dt;
  const double th = phi.norm();
  const Eigen::Matrix3d k = skew(phi);
  Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d v = Eigen::Matrix3d::Identity();
  if (th > 1e-10) {
    rot = Eigen::AngleAxisd(th, phi / th).toRotationMatrix();
    v += (1.0 - std::cos(th)) / (th * th) * k + (th - std::sin(th)) / (th * th * th) * k * k;
  } else {
    rot += k + 0.5 * k * k;
    v += 0.5 * k + k * k / 6.0;
  }
  CameraPose out;
  out.rotation = pose.rotation * rot;
  out.position = pose.position + pose.rotation * (v * nu.linear() * dt);
  return out;
}

struct Measurement {
  PolygonFeatures polygon;  // clean projected vertices
  MomentState clean;
  MomentState state;  // clean + disturbance
  DepthModel depth;   // mean camera-frame depth of the vertices
};

// Projects the target through the pinhole model. Throws TargetLost if any vertex is behind
// the camera or outside the image.
inline Measurement measure(const CameraPose& pose, const TargetSample& target, const CameraIntrinsics& k,
                           const std::array<int, 2>& reference_pair, const Eigen::Vector4d& xi) {
  const RigidTransform tf = pose.transform();
  const int n = static_cast<int>(target.positions.cols());
  Measurement m;
  m.polygon.vertices.resize(2, n);
  m.polygon.reference_pair = reference_pair;
  double zsum = 0.0;
  for (int j = 0; j < n; ++j) {
    const Eigen::Vector3d p = tf.to_camera(target.positions.col(j));
    if (!(p.z() > 0.0)) throw TargetLost("target vertex behind the camera");
    const PixelPoint px = normalized_to_pixel(project_to_normalized(p), k);
    if (!(px.u >= 0.0 && px.u <= k.width && px.v >= 0.0 && px.v <= k.height)) {
      throw TargetLost("target vertex left the image");
    }
    const NormalizedPoint q = pixel_to_normalized(px, k);
    m.polygon.vertices.col(j) << q.x, q.y;
    zsum += p.z();
  }
  m.depth.z = zsum / n;
  m.clean = extract_state(m.polygon);
  m.state.value = m.clean.value + xi;
  return m;
}

// Uniform per-component sample in [-bound, bound].
inline Eigen::Vector4d inject_disturbance(std::mt19937_64& rng, double bound) {
  if (!(bound >= 0.0)) throw InvalidArgument("disturbance bound must be non-negative");
  if (bound == 0.0) return Eigen::Vector4d::Zero();
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::Vector4d xi;
  for (int i = 0; i < 4; ++i) xi[i] = u(rng);
  return xi;
}

// UAV mode: no roll/pitch rates, and the command is expressed in the level frame.
inline CameraVelocity actuated_velocity(const CameraVelocity& nu, ScenarioMode mode) {
  if (mode == ScenarioMode::free_camera) return nu;
  Vector6d t = nu.twist;
  t[3] = 0.0;
  t[4] = 0.0;
  return level_frame_velocity(CameraVelocity(t), 0.0, 0.0);
}

inline constexpr double kMinStandoff = 0.1;  // m

struct WorldStep {
  CameraPose pose;
  Measurement measurement;
};

inline WorldStep step_world(const CameraPose& pose, const DeformableTarget& target, const CameraVelocity& nu,
                            const Eigen::Vector4d& xi, double t, double dt, const CameraIntrinsics& k,
                            ScenarioMode mode, const std::array<int, 2>& reference_pair) {
  WorldStep out;
  out.pose = integrate_pose(pose, actuated_velocity(nu, mode), dt);
  const TargetSample smp = target.sample(t + dt);
  if (!(out.pose.position.z() - smp.positions.row(2).maxCoeff() > kMinStandoff)) {
    throw TargetLost("camera came within the minimum standoff of the target plane");
  }
  out.measurement = measure(out.pose, smp, k, reference_pair, xi);
  return out;
}

struct TargetSpec {
  Eigen::Matrix2Xd vertices;  // world xy, m; plane at z = 0 at t = 0
  std::array<int, 2> reference_pair{0, 1};
  std::vector<DeformationMode> modes;
};

struct CameraInit {
  Eigen::Vector3d position{0.0, 0.0, 2.0};
  double yaw = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
};

struct DisturbanceSpec {
  double bound = 0.0;  // per component
  std::uint64_t seed = 0;
};

struct ConvergenceSpec {
  double window = 0.2;                     // trailing fraction of the run
  double centroid_halfwidth_frac = 0.02;   // of the normalized image half-width
  double sigma = 0.05;                     // |sigma_bar error|
  double angle_deg = 2.0;
  double barrier_tolerance = 0.02;         // |L_j - 1| at steady state
};

struct OutputSpec {
  std::string dir = "out";
  bool plots = true;
};

struct ScenarioConfig {
  std::string name = "scenario";
  ScenarioMode mode = ScenarioMode::free_camera;
  std::uint64_t seed = 0;
  double duration = 20.0;  // s
  CameraIntrinsics intrinsics;
  CameraInit camera;
  TargetSpec target;
  Eigen::Vector4d desired = Eigen::Vector4d::Zero();
  OcpConfig ocp;
  double abar_bound = 5.0;
  DisturbanceSpec disturbance;
  ConvergenceSpec convergence;
  OutputSpec output;

  int steps() const { return static_cast<int>(std::lround(duration / ocp.dt)); }

  // Fills the parts of the OCP that follow from the scenario and checks consistency.
  void finalize() {
    try {
      intrinsics.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    ocp.constraints.visibility.fov = intrinsics.fov();
    if (mode == ScenarioMode::uav) {
      if (ocp.mask.enabled(VelocityAxis::omega_x) || ocp.mask.enabled(VelocityAxis::omega_y)) {
        throw ConfigError("uav mode cannot actuate roll or pitch rates");
      }
      if (std::abs(camera.roll) > 0.0 || std::abs(camera.pitch) > 0.0) {
        throw ConfigError("uav mode requires zero initial roll and pitch");
      }
    }
    try {
      ocp.validate();
      PolygonFeatures{target.vertices, target.reference_pair}.validate();
      make_anchor(MomentState{desired}, ocp.constraints);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    if (!(duration > 0.0) || steps() < 1) throw ConfigError("duration must cover at least one control period");
    if (!(disturbance.bound >= 0.0)) throw ConfigError("disturbance bound must be non-negative");
    if (!(convergence.window > 0.0 && convergence.window <= 1.0)) throw ConfigError("window must be in (0, 1]");
  }
};

struct SimRecord {
  double t = 0.0;
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Vector4d err = Eigen::Vector4d::Zero();
  double angle_err_deg = 0.0;  // signed
  double L1 = 0.0;
  double L2 = 0.0;
  Vector6d nu = Vector6d::Zero();
  double cost = 0.0;
  int iterations = 0;
  bool feasible = true;  // false when the local controller acted in recovery
};

struct SimLog {
  std::string name;
  std::vector<SimRecord> records;
  Eigen::Vector4d desired = Eigen::Vector4d::Zero();
  DiagnosticsBundle diagnostics;
  bool aborted = false;
  std::string abort_reason;
  int infeasible_starts = 0;  // after the first step
  int recovery_steps = 0;
  double wall_time_s = 0.0;
};

// Per-step view passed to an optional observer (audits, tests).
struct StepInfo {
  int k = 0;
  double t = 0.0;
  const Measurement* measurement = nullptr;
  const Eigen::Matrix2Xd* flow = nullptr;
  const RecedingResult* result = nullptr;
  const CameraPose* pose = nullptr;
  Eigen::Vector4d xi = Eigen::Vector4d::Zero();
};

inline double angle_error_deg(double a_bar, double a_bar_des) {
  return (std::atan(a_bar) - std::atan(a_bar_des)) * 180.0 / std::numbers::pi;
}

// Desired-pose polygon: the given polygon rescaled and moved to match the desired centroid
// and area. Used only for diagnostics that need vertex geometry at x_des.
inline PolygonFeatures polygon_at(const MomentState& x_des, const PolygonFeatures& s) {
  PolygonFeatures out = s;
  const Eigen::Vector2d c = centroid(s);
  const double scale = std::sqrt(x_des.area() / polygon_area(s));
  out.vertices = ((s.vertices.colwise() - c) * scale).colwise() + x_des.centroid();
  return out;
}

inline constexpr int kMaxRecoverySteps = 20;

// Closed loop: measure -> estimate flow -> receding step -> move camera. Deterministic for a
// fixed configuration.
inline SimLog run_scenario(ScenarioConfig cfg, const std::function<void(const StepInfo&)>& observer = {}) {
  cfg.finalize();
  SimLog log;
  log.name = cfg.name;
  log.desired = cfg.desired;
  const auto wall0 = std::chrono::steady_clock::now();

  const DeformableTarget target(cfg.target.vertices, cfg.target.modes, cfg.seed);
  try {
    target.validate(cfg.duration);
  } catch (const DegenerateTarget& e) {
    throw ConfigError(e.what());
  }

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(cfg.disturbance.seed),
                    static_cast<std::uint32_t>(cfg.disturbance.seed >> 32)};
  std::mt19937_64 rng(seq);

  CameraPose pose = CameraPose::level(cfg.camera.position, cfg.camera.yaw, cfg.camera.roll, cfg.camera.pitch);
  const MomentState x_des{cfg.desired};
  RecedingHorizonController ctrl(cfg.ocp, x_des);
  CentroidFlowEstimator estimator;

  Measurement meas;
  Eigen::Vector4d xi = inject_disturbance(rng, cfg.disturbance.bound);
  try {
    meas = measure(pose, target.sample(0.0), cfg.intrinsics, cfg.target.reference_pair, xi);
  } catch (const TargetLost& e) {
    throw ConfigError(std::string("initial view: ") + e.what());
  }
  log.diagnostics = compute_diagnostics(cfg.ocp, x_des, polygon_at(x_des, meas.polygon), meas.depth, cfg.abar_bound);

  const double dt = cfg.ocp.dt;
  const int steps = cfg.steps();
  std::optional<Measurement> prev;
  CameraVelocity prev_nu;
  int consecutive_recovery = 0;
  log.records.reserve(static_cast<std::size_t>(steps));

  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    Matrix2x6 l_hat = Matrix2x6::Zero();
    if (prev) l_hat = dynamics_matrix(prev->polygon, prev->clean, prev->depth, cfg.ocp.dynamics).topRows<2>();
    const FlowEstimate flow =
        estimator.update({meas.state.centroid(), t}, l_hat, prev_nu, meas.polygon.size());

    const RecedingResult res = ctrl.step(meas.polygon, meas.state, flow.per_vertex_flow, meas.depth);
    if (res.recovery) {
      ++log.recovery_steps;
      ++consecutive_recovery;
      if (k > 0 && !detail::state_feasible(meas.state, cfg.ocp.constraints)) ++log.infeasible_starts;
    } else {
      consecutive_recovery = 0;
    }

    SimRecord r;
    r.t = t;
    r.x = meas.state.value;
    r.err = meas.state.value - cfg.desired;
    r.angle_err_deg = angle_error_deg(meas.state.a_bar(), cfg.desired[3]);
    r.L1 = constraint_L1(meas.state.centroid(), cfg.ocp.constraints.visibility).value;
    r.L2 = constraint_L2(meas.state.sigma_bar(), cfg.ocp.constraints.area).value;
    r.nu = res.applied.twist;
    r.cost = res.solution ? res.solution->cost : std::numeric_limits<double>::quiet_NaN();
    r.iterations = res.solution ? res.solution->iterations : 0;
    r.feasible = !res.recovery;
    log.records.push_back(r);

    if (observer) observer(StepInfo{k, t, &meas, &flow.per_vertex_flow, &res, &pose, xi});

    if (consecutive_recovery >= kMaxRecoverySteps) {
      log.aborted = true;
      log.abort_reason = "unrecoverable infeasibility";
      break;
    }
    if (k + 1 == steps) break;

    prev = meas;
    prev_nu = res.applied;
    xi = inject_disturbance(rng, cfg.disturbance.bound);
    try {
      WorldStep w = step_world(pose, target, res.applied, xi, t, dt, cfg.intrinsics, cfg.mode,
                               cfg.target.reference_pair);
      pose = w.pose;
      meas = std::move(w.measurement);
    } catch (const TargetLost& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      break;
    } catch (const DegenerateTarget& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      break;
    } catch (const DegenerateArea& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      break;
    }
  }
  log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return log;
}

inline constexpr const char* kCsvHeader =
    "t,sx,sy,sigbar,abar,ex,ey,esig,eang,L1,L2,vx,vy,vz,wx,wy,wz,cost,iters,feasible";

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string to_csv(const SimLog& log) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : log.records) {
    os << format_number(r.t);
    for (int i = 0; i < 4; ++i) os << ',' << format_number(r.x[i]);
    for (int i = 0; i < 3; ++i) os << ',' << format_number(r.err[i]);
    os << ',' << format_number(r.angle_err_deg) << ',' << format_number(r.L1) << ',' << format_number(r.L2);
    for (int i = 0; i < 6; ++i) os << ',' << format_number(r.nu[i]);
    os << ',' << format_number(r.cost) << ',' << r.iterations << ',' << (r.feasible ? 1 : 0) << '\n';
  }
  return os.str();
}

inline void write_csv(const SimLog& log, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << to_csv(log);
}

}  // namespace vsnmpc
