#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "vsnmpc/camera.hpp"
#include "vsnmpc/errors.hpp"
#include "vsnmpc/polygon.hpp"

namespace vsnmpc {

// Constraint values at or below this are treated as a barrier blow-up.
inline constexpr double kBarrierEpsilon = 1e-8;
// Central-difference step used for barrier gradients.
inline constexpr double kBarrierFdStep = 1e-6;

struct VisibilityParams {
  double gamma = 0.1;  // normalized units
  FovRect fov;

  void validate() const {
    if (!(gamma > 0.0)) throw InvalidArgument("visibility margin must be positive");
    if (!(gamma < 0.5 * std::min(fov.width(), fov.height()))) {
      throw InvalidArgument("visibility margin must be below half the smaller field-of-view side");
    }
  }
};

struct AreaBounds {
  double sigma_min = 0.01;  // normalized units^2
  double sigma_max = 0.5;
  double delta = 0.02;

  void validate() const {
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) throw InvalidArgument("area bounds must satisfy 0 < min < max");
    if (!(delta > 0.0 && delta < 0.5 * (sigma_max - sigma_min))) {
      throw InvalidArgument("area margin must be positive and below half the bound gap");
    }
  }
};

struct InputLimits {
  std::array<double, 3> nu_max{1.0, 1.0, 1.0};     // m/s
  std::array<double, 3> omega_max{1.0, 1.0, 1.0};  // rad/s

  Vector6d as_vector() const {
    Vector6d v;
    v << nu_max[0], nu_max[1], nu_max[2], omega_max[0], omega_max[1], omega_max[2];
    return v;
  }

  void validate() const {
    for (double m : nu_max)
      if (!(m > 0.0)) throw InvalidArgument("translational limits must be positive");
    for (double m : omega_max)
      if (!(m > 0.0)) throw InvalidArgument("rotational limits must be positive");
  }
};

struct StateConstraints {
  VisibilityParams visibility;
  AreaBounds area;
};

enum class Constraint : int { visibility = 0, area = 1 };

struct ConstraintEval {
  double value = 1.0;
  bool violated = false;
};

// Minimum signed distance from a point to the edges of the rectangle; negative outside.
inline double fov_distance(const Eigen::Vector2d& p, const FovRect& fov) {
  return std::min({p.x() - fov.x_min, fov.x_max - p.x(), p.y() - fov.y_min, fov.y_max - p.y()});
}

// Distance of exp(sigma_bar) to the nearer area bound; negative outside.
inline double area_distance(double sigma_bar, const AreaBounds& b) {
  const double area = std::exp(sigma_bar);
  return std::min(area - b.sigma_min, b.sigma_max - area);
}

// 1 beyond the margin, 1 - exp(-(d/(d - margin))^2) inside it, 0 on or past the boundary.
inline double margin_constraint(double d, double margin) {
  if (!(d > 0.0)) return 0.0;
  if (d >= margin) return 1.0;
  const double r = d / (d - margin);
  return 1.0 - std::exp(-r * r);
}

inline ConstraintEval constraint_L1(const Eigen::Vector2d& sbar, const VisibilityParams& p) {
  const double d = fov_distance(sbar, p.fov);
  return {margin_constraint(d, p.gamma), !(d > 0.0)};
}

inline ConstraintEval constraint_L2(double sigma_bar, const AreaBounds& b) {
  const double d = area_distance(sigma_bar, b);
  return {margin_constraint(d, b.delta), !(d > 0.0)};
}

inline double constraint_value(const MomentState& x, Constraint j, const StateConstraints& c) {
  return j == Constraint::visibility ? constraint_L1(x.centroid(), c.visibility).value
                                     : constraint_L2(x.sigma_bar(), c.area).value;
}

// b_j = 1 / L_j.
inline double reciprocal_barrier(const MomentState& x, Constraint j, const StateConstraints& c) {
  const double l = constraint_value(x, j, c);
  if (!(l > kBarrierEpsilon)) throw BarrierBlowup("constraint value at or below the barrier guard");
  return 1.0 / l;
}

struct RecenteringAnchor {
  MomentState x_des;
  std::array<double, 2> b_des{1.0, 1.0};
  std::array<Eigen::Vector4d, 2> grad_b_des{Eigen::Vector4d::Zero(), Eigen::Vector4d::Zero()};
};

inline RecenteringAnchor make_anchor(const MomentState& x_des, const StateConstraints& c) {
  RecenteringAnchor a;
  a.x_des = x_des;
  for (int j = 0; j < 2; ++j) {
    const auto id = static_cast<Constraint>(j);
    if (!(constraint_value(x_des, id, c) > kBarrierEpsilon)) {
      throw InvalidArgument("desired state must lie strictly inside the barrier-safe set");
    }
    a.b_des[static_cast<std::size_t>(j)] = reciprocal_barrier(x_des, id, c);
    Eigen::Vector4d grad;
    for (int i = 0; i < 4; ++i) {
      MomentState hi = x_des;
      MomentState lo = x_des;
      hi.value[i] += kBarrierFdStep;
      lo.value[i] -= kBarrierFdStep;
      grad[i] = (reciprocal_barrier(hi, id, c) - reciprocal_barrier(lo, id, c)) / (2.0 * kBarrierFdStep);
    }
    a.grad_b_des[static_cast<std::size_t>(j)] = grad;
  }
  return a;
}

// b_j(x) - b_j(x_des) - grad b_j(x_des)^T (x - x_des); zero at the anchor.
inline double recentered_barrier(const MomentState& x, Constraint j, const RecenteringAnchor& a,
                                 const StateConstraints& c) {
  const auto k = static_cast<std::size_t>(j);
  return reciprocal_barrier(x, j, c) - a.b_des[k] - a.grad_b_des[k].dot(x.value - a.x_des.value);
}

inline double barrier_Bx(const MomentState& x, const RecenteringAnchor& a, const StateConstraints& c) {
  return recentered_barrier(x, Constraint::visibility, a, c) + recentered_barrier(x, Constraint::area, a, c);
}

namespace detail {

// -2/m + 1/(m - v) + 1/(m + v), written without the cancellation at small v.
inline double saturation_term(double v, double m) { return 2.0 * v * v / (m * (m * m - v * v)); }

}  // namespace detail

// Input saturation barrier; zero at nu = 0 and unbounded at the limits.
inline double barrier_Bnu(const Vector6d& nu, const InputLimits& lim) {
  const Vector6d m = lim.as_vector();
  double sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    if (!(std::abs(nu[i]) < m[i] - kBarrierEpsilon)) throw InputAtLimit("velocity component at its limit");
    sum += detail::saturation_term(nu[i], m[i]);
  }
  return sum;
}

namespace detail {

// Non-throwing variants for the optimizer: +inf marks an infeasible point.
inline double barrier_Bx_or_inf(const MomentState& x, const RecenteringAnchor& a, const StateConstraints& c) {
  const double l1 = constraint_L1(x.centroid(), c.visibility).value;
  const double l2 = constraint_L2(x.sigma_bar(), c.area).value;
  if (!(l1 > kBarrierEpsilon) || !(l2 > kBarrierEpsilon)) return std::numeric_limits<double>::infinity();
  const Eigen::Vector4d dx = x.value - a.x_des.value;
  return (1.0 / l1 - a.b_des[0] - a.grad_b_des[0].dot(dx)) + (1.0 / l2 - a.b_des[1] - a.grad_b_des[1].dot(dx));
}

inline bool state_feasible(const MomentState& x, const StateConstraints& c) {
  return constraint_L1(x.centroid(), c.visibility).value > kBarrierEpsilon &&
         constraint_L2(x.sigma_bar(), c.area).value > kBarrierEpsilon;
}

inline double barrier_Bnu_or_inf(const Vector6d& nu, const Vector6d& m) {
  double sum = 0.0;
  for (int i = 0; i < 6; ++i) {
    if (!(std::abs(nu[i]) < m[i] - kBarrierEpsilon)) return std::numeric_limits<double>::infinity();
    sum += saturation_term(nu[i], m[i]);
  }
  return sum;
}

}  // namespace detail

}  // namespace vsnmpc
