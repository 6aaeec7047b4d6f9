#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "vsnmpc/barriers.hpp"
#include "vsnmpc/camera.hpp"
#include "vsnmpc/errors.hpp"
#include "vsnmpc/nmpc.hpp"
#include "vsnmpc/polygon.hpp"

namespace vsnmpc {

// Closed-form Lipschitz constant of the discrete model under the input limits.
inline double lipschitz_Lf(const InputLimits& limits, const DepthModel& depth, double dt) {
  depth.validate();
  if (!(dt > 0.0)) throw InvalidArgument("lipschitz_Lf: dt must be positive");
  const double a = 1.0 + limits.nu_max[2] * dt / depth.z;
  const double b = limits.omega_max[2] * dt;
  return std::sqrt(2.0 * std::max(4.0 * a * a, 4.0 * b * b));
}

// Largest observed ratio |f(x1, nu) - f(x2, nu)| / |x1 - x2| for the moment-state map, with
// x1, x2 from randomly perturbed copies of `s` and nu drawn inside the limits.
inline double empirical_Lf(const PolygonFeatures& s, const DepthModel& depth, const OcpConfig& cfg, int samples = 400,
                           std::uint64_t seed = 7, double perturbation = 5e-3) {
  s.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Vector6d lim = cfg.limits.as_vector();
  const Eigen::Matrix2Xd no_flow;
  const double scale = std::max(1e-6, std::sqrt(polygon_area(s)));
  double best = 0.0;
  for (int k = 0; k < samples; ++k) {
    PolygonFeatures a = s;
    PolygonFeatures b = s;
    for (int j = 0; j < s.size(); ++j) {
      a.vertices.col(j) += perturbation * scale * Eigen::Vector2d(unit(rng), unit(rng));
      b.vertices.col(j) += perturbation * scale * Eigen::Vector2d(unit(rng), unit(rng));
    }
    Vector6d nu;
    for (int i = 0; i < 6; ++i) nu[i] = cfg.mask.enabled(i) ? 0.95 * lim[i] * unit(rng) : 0.0;
    try {
      const MomentState xa = extract_state(a);
      const MomentState xb = extract_state(b);
      const double dx = (xa.value - xb.value).norm();
      if (!(dx > 1e-12)) continue;
      const auto fa = propagate_discrete(a, xa, CameraVelocity(nu), no_flow, cfg.dt, depth, cfg.dynamics);
      const auto fb = propagate_discrete(b, xb, CameraVelocity(nu), no_flow, cfg.dt, depth, cfg.dynamics);
      best = std::max(best, (fa.state.value - fb.state.value).norm() / dx);
    } catch (const Error&) {
      continue;
    }
  }
  return best;
}

// Per-component magnitude bounds of the moment state over the admissible set.
struct StateBox {
  Eigen::Vector4d bound = Eigen::Vector4d::Ones();
};

inline StateBox make_state_box(const StateConstraints& c, double abar_bound) {
  const FovRect& f = c.visibility.fov;
  StateBox box;
  box.bound << std::max(std::abs(f.x_min), std::abs(f.x_max)), std::max(std::abs(f.y_min), std::abs(f.y_max)),
      std::max(std::abs(std::log(c.area.sigma_min)), std::abs(std::log(c.area.sigma_max))), abar_bound;
  return box;
}

// For diagonal Q the largest singular value is the largest weight.
inline double lipschitz_LF(const StateBox& box, const Eigen::Vector4d& Q) {
  return 2.0 * box.bound.norm() * Q.cwiseAbs().maxCoeff();
}

inline double lipschitz_LE(double eps0, const Eigen::Vector4d& P) { return 2.0 * eps0 * P.cwiseAbs().maxCoeff(); }

inline double geometric_sum(double r, int terms) {
  if (terms <= 0) return 0.0;
  if (std::abs(r - 1.0) < 1e-12) return terms;
  return (std::pow(r, terms) - 1.0) / (r - 1.0);
}

// Worst-case gap after i steps between disturbed and nominal predictions.
inline double prediction_error_bound(int i, double xi, double Lf) {
  if (i < 0) throw InvalidArgument("prediction_error_bound: negative step");
  return xi * geometric_sum(Lf, i);
}

struct DisturbanceBound {
  std::vector<double> per_m;  // m = 0..n-1
  double value = 0.0;         // minimum over m
};

inline DisturbanceBound disturbance_feasibility_bound(double a_eps, double a_eps_f, double L_E, double Lf, int n) {
  if (!(a_eps_f > 0.0) || !(a_eps > a_eps_f)) throw InvalidArgument("need a_eps > a_eps_f > 0");
  if (!(Lf > 0.0) || !(L_E > 0.0) || n < 1) throw InvalidArgument("need positive Lipschitz constants and horizon");
  DisturbanceBound out;
  out.per_m.reserve(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    const double denom = L_E * std::pow(Lf, n - 1 - m) * geometric_sum(Lf, m + 1);
    out.per_m.push_back((a_eps - a_eps_f) / denom);
  }
  out.value = *std::min_element(out.per_m.begin(), out.per_m.end());
  return out;
}

inline double lipschitz_Lzm(int m, int n, double L_E, double L_F, double Lf) {
  if (m < 0 || m >= n) throw InvalidArgument("lipschitz_Lzm: m out of range");
  return L_E * std::pow(Lf, n - 1 - m) + L_F * geometric_sum(Lf, n - 1 - m);
}

struct DiagnosticsBundle {
  double L_f = 0.0;            // closed-form
  double L_f_empirical = 0.0;  // sampled
  double L_F = 0.0;
  double L_E = 0.0;
  double L_FV_empirical = 0.0;  // input-side stage-cost constant, sampled
  double L_h = 0.0;
  std::vector<double> L_zm;
  double F_lower = 0.0;  // F >= F_lower * (|x_err|^2 + |nu|^2)
  double eps0 = 0.0;
  double a_eps = 0.0;
  double a_eps_f = 0.0;
  DisturbanceBound xi_max;            // from the closed-form L_f
  DisturbanceBound xi_max_empirical;  // from the sampled L_f

  bool in_terminal_set(const Eigen::Vector4d& x_err, const Eigen::Vector4d& P) const {
    return x_err.dot(P.cwiseProduct(x_err)) <= a_eps_f;
  }
  bool in_terminal_region(const Eigen::Vector4d& x_err, const Eigen::Vector4d& P) const {
    return x_err.dot(P.cwiseProduct(x_err)) <= a_eps;
  }
};

inline double cost_difference_bound(int m, double e, double stage_lower_sum, const DiagnosticsBundle& d) {
  if (m < 0 || m >= static_cast<int>(d.L_zm.size())) throw InvalidArgument("cost_difference_bound: m out of range");
  return d.L_zm[static_cast<std::size_t>(m)] * e - stage_lower_sum;
}

// Radius of the largest ball around x_des (in moment-state coordinates) whose centroid and
// area components stay inside the constraint boundaries.
inline double safe_radius(const MomentState& x_des, const StateConstraints& c) {
  const double r_fov = fov_distance(x_des.centroid(), c.visibility.fov);
  const double r_area =
      std::min(x_des.sigma_bar() - std::log(c.area.sigma_min), std::log(c.area.sigma_max) - x_des.sigma_bar());
  return std::min(r_fov, r_area);
}

// Sup of |d/dnu (nu^T R nu + B_nu)| over the 95% input box, sampled.
inline double empirical_LFV(const OcpConfig& cfg, int samples = 2000, std::uint64_t seed = 11) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-0.95, 0.95);
  const Vector6d lim = cfg.limits.as_vector();
  double best = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vector6d g = Vector6d::Zero();
    for (int i = 0; i < 6; ++i) {
      if (!cfg.mask.enabled(i)) continue;
      const double v = unit(rng) * lim[i];
      const double m = lim[i];
      g[i] = 2.0 * cfg.R[i] * v + 1.0 / ((m - v) * (m - v)) - 1.0 / ((m + v) * (m + v));
    }
    best = std::max(best, g.norm());
  }
  return best;
}

// Everything derived from the configuration at the desired pose.
inline DiagnosticsBundle compute_diagnostics(const OcpConfig& cfg, const MomentState& x_des,
                                             const PolygonFeatures& s_des, const DepthModel& depth,
                                             double abar_bound = 5.0) {
  cfg.validate();
  DiagnosticsBundle d;
  d.L_f = lipschitz_Lf(cfg.limits, depth, cfg.dt);
  d.L_f_empirical = empirical_Lf(s_des, depth, cfg);
  d.L_F = lipschitz_LF(make_state_box(cfg.constraints, abar_bound), cfg.Q);
  d.F_lower = std::min(cfg.Q.minCoeff(), cfg.mask.select(cfg.R).minCoeff());
  const double r_safe = safe_radius(x_des, cfg.constraints);
  if (!(r_safe > 0.0)) throw InvalidArgument("desired state is not strictly inside the constraints");
  d.eps0 = 0.9 * r_safe * std::sqrt(cfg.P.minCoeff() / cfg.P.maxCoeff());
  d.a_eps = cfg.P.maxCoeff() * d.eps0 * d.eps0;
  d.a_eps_f = 0.5 * d.a_eps;
  d.L_E = lipschitz_LE(d.eps0, cfg.P);
  d.L_FV_empirical = empirical_LFV(cfg);
  d.L_h = local_controller(x_des, x_des, s_des, depth, cfg).gain_bound;
  const int n = cfg.horizon;
  for (int m = 0; m < n; ++m) d.L_zm.push_back(lipschitz_Lzm(m, n, d.L_E, d.L_F, d.L_f));
  d.xi_max = disturbance_feasibility_bound(d.a_eps, d.a_eps_f, d.L_E, d.L_f, n);
  d.xi_max_empirical = disturbance_feasibility_bound(d.a_eps, d.a_eps_f, d.L_E, std::max(d.L_f_empirical, 1e-9), n);
  return d;
}

}  // namespace vsnmpc
