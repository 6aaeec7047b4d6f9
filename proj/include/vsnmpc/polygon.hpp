#pragma once

#include <array>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "vsnmpc/camera.hpp"
#include "vsnmpc/errors.hpp"

namespace vsnmpc {

// Polygons whose area is at or below this value (normalized units^2) are rejected.
inline constexpr double kAreaEpsilon = 1e-9;
// Reference-angle denominators at or below this magnitude are rejected.
inline constexpr double kAngleEpsilon = 1e-6;

// Ordered image-plane polygon. Vertex j is column j; indices are cyclic.
struct PolygonFeatures {
  Eigen::Matrix2Xd vertices;
  // Zero-based indices of the two vertices defining the reference angle.
  std::array<int, 2> reference_pair{0, 1};

  PolygonFeatures() = default;
  explicit PolygonFeatures(Eigen::Matrix2Xd v, std::array<int, 2> refs = {0, 1})
      : vertices(std::move(v)), reference_pair(refs) {
    validate();
  }

  int size() const { return static_cast<int>(vertices.cols()); }
  NormalizedPoint vertex(int j) const { return {vertices(0, j), vertices(1, j)}; }

  void validate() const {
    if (size() < 3) throw InvalidArgument("polygon needs at least three vertices");
    const auto [a, b] = reference_pair;
    if (a == b || a < 0 || b < 0 || a >= size() || b >= size()) {
      throw InvalidArgument("reference pair must be two distinct in-range vertex indices");
    }
    if (!vertices.allFinite()) throw InvalidArgument("polygon vertices must be finite");
  }
};

// [centroid x, centroid y, log(area), tan(reference angle)].
struct MomentState {
  Eigen::Vector4d value = Eigen::Vector4d::Zero();

  MomentState() = default;
  explicit MomentState(const Eigen::Vector4d& v) : value(v) {}
  MomentState(double sbar_x, double sbar_y, double sigma_bar, double a_bar)
      : value(sbar_x, sbar_y, sigma_bar, a_bar) {}

  double sbar_x() const { return value[0]; }
  double sbar_y() const { return value[1]; }
  double sigma_bar() const { return value[2]; }
  double a_bar() const { return value[3]; }
  Eigen::Vector2d centroid() const { return value.head<2>(); }
  double area() const { return std::exp(value[2]); }
};

enum class DynamicsMode {
  chain_rule,         // rows 3-4 assembled from exact vertex gradients
  closed_form,  // rows 3-4 from the printed closed forms, kept for comparison
};

inline Eigen::Vector2d centroid(const PolygonFeatures& s) {
  return s.vertices.rowwise().mean();
}

// Sum of the cyclic 2x2 determinants x_j y_{j+1} - x_{j+1} y_j (twice the signed area).
inline double signed_area_sum(const PolygonFeatures& s) {
  const int n = s.size();
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const int k = (j + 1) % n;
    sum += s.vertices(0, j) * s.vertices(1, k) - s.vertices(0, k) * s.vertices(1, j);
  }
  return sum;
}

inline double polygon_area(const PolygonFeatures& s) { return 0.5 * std::abs(signed_area_sum(s)); }

namespace detail {

inline void require_area(double area) {
  if (!(area > kAreaEpsilon)) {
    throw DegenerateArea("polygon area " + std::to_string(area) + " is at or below the degeneracy threshold");
  }
}

struct AngleTerms {
  double e1;
  double e2;
};

inline AngleTerms angle_terms(const PolygonFeatures& s, const Eigen::Vector2d& c) {
  const auto [a, b] = s.reference_pair;
  const double e1 = s.vertices(0, a) + s.vertices(0, b) - 2.0 * c.x();
  const double e2 = s.vertices(1, a) + s.vertices(1, b) - 2.0 * c.y();
  if (!(std::abs(e1) > kAngleEpsilon)) {
    throw AngleSingularity("reference-angle denominator is too close to zero");
  }
  return {e1, e2};
}

}  // namespace detail

inline MomentState extract_state(const PolygonFeatures& s) {
  s.validate();
  const Eigen::Vector2d c = centroid(s);
  const double area = polygon_area(s);
  detail::require_area(area);
  const auto [e1, e2] = detail::angle_terms(s, c);
  return {c.x(), c.y(), std::log(area), e2 / e1};
}

// Column j holds d(area)/d(s_j).
inline Eigen::Matrix2Xd area_gradient(const PolygonFeatures& s) {
  const int n = s.size();
  const double sum = signed_area_sum(s);
  detail::require_area(0.5 * std::abs(sum));
  const double half_sign = sum > 0.0 ? 0.5 : -0.5;
  Eigen::Matrix2Xd grad(2, n);
  for (int j = 0; j < n; ++j) {
    const int next = (j + 1) % n;
    const int prev = (j + n - 1) % n;
    grad(0, j) = half_sign * (s.vertices(1, next) - s.vertices(1, prev));
    grad(1, j) = half_sign * (-s.vertices(0, next) + s.vertices(0, prev));
  }
  return grad;
}

// Column j holds d(tan a)/d(s_j). Every vertex enters through the centroid; the reference
// vertices additionally enter explicitly.
inline Eigen::Matrix2Xd angle_gradient(const PolygonFeatures& s) {
  const int n = s.size();
  const auto [e1, e2] = detail::angle_terms(s, centroid(s));
  const double abar = e2 / e1;
  Eigen::Matrix2Xd grad(2, n);
  for (int j = 0; j < n; ++j) {
    double c = -2.0 / n;
    if (j == s.reference_pair[0]) c += 1.0;
    if (j == s.reference_pair[1]) c += 1.0;
    // dE1/dx_j = dE2/dy_j = c; quotient rule.
    grad(0, j) = -c * abar / e1;
    grad(1, j) = c / e1;
  }
  return grad;
}

// Rows: centroid (1/N blocks), (1/area) * area gradient, angle gradient. Column 2j is x_j,
// column 2j+1 is y_j.
inline Eigen::Matrix<double, 4, Eigen::Dynamic> state_jacobian(const PolygonFeatures& s) {
  const int n = s.size();
  const Eigen::Matrix2Xd ga = area_gradient(s);
  const Eigen::Matrix2Xd gt = angle_gradient(s);
  const double inv_area = 1.0 / polygon_area(s);
  Eigen::Matrix<double, 4, Eigen::Dynamic> jac = Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, 2 * n);
  for (int j = 0; j < n; ++j) {
    jac(0, 2 * j) = 1.0 / n;
    jac(1, 2 * j + 1) = 1.0 / n;
    jac(2, 2 * j) = inv_area * ga(0, j);
    jac(2, 2 * j + 1) = inv_area * ga(1, j);
    jac(3, 2 * j) = gt(0, j);
    jac(3, 2 * j + 1) = gt(1, j);
  }
  return jac;
}

// Stacked per-vertex interaction matrices (2N x 6).
inline Eigen::Matrix<double, Eigen::Dynamic, 6> stacked_interaction(const PolygonFeatures& s,
                                                                    const DepthModel& depth) {
  Eigen::Matrix<double, Eigen::Dynamic, 6> L(2 * s.size(), 6);
  for (int j = 0; j < s.size(); ++j) L.middleRows<2>(2 * j) = interaction_matrix(s.vertex(j), depth);
  return L;
}

namespace detail {

inline void closed_form_rows(const PolygonFeatures& s, const MomentState& x, const DepthModel& depth,
                             Matrix4x6& g) {
  const int n = s.size();
  double area_wx = 0.0;
  double area_wy = 0.0;
  double sum_xx = 0.0;
  double sum_yy = 0.0;
  double sum_xy = 0.0;
  for (int j = 0; j < n; ++j) {
    const int k = (j + 1) % n;
    const double xj = s.vertices(0, j), yj = s.vertices(1, j);
    const double xk = s.vertices(0, k), yk = s.vertices(1, k);
    const double d = xj * yk - xk * yj;
    area_wx += (yj + yk) * d;
    area_wy += (xj + xk) * d;
    sum_xx += xj * xj;
    sum_yy += yj * yj;
    sum_xy += xj * yj;
  }
  g.row(2).setZero();
  g(2, 2) = 2.0 / depth.z;
  g(2, 3) = 9.0 * area_wx;
  g(2, 4) = -9.0 * area_wy;

  const auto [a, b] = s.reference_pair;
  const double x1 = s.vertices(0, a), y1 = s.vertices(1, a);
  const double x2 = s.vertices(0, b), y2 = s.vertices(1, b);
  const double e1 = x1 + x2 - 2.0 * x.sbar_x();
  if (!(std::abs(e1) > kAngleEpsilon)) throw AngleSingularity("reference-angle denominator is too close to zero");
  const double abar = x.a_bar();
  const double pyy = y1 * y1 + y2 * y2 - 2.0 / n * sum_yy;
  const double pxx = x1 * x1 + x2 * x2 - 2.0 / n * sum_xx;
  const double pxy = x1 * y1 + x2 * y2 - 2.0 / n * sum_xy;
  g.row(3).setZero();
  g(3, 3) = pyy / e1 - abar * pxy / e1;
  g(3, 4) = abar * pxx / e1 - pxy / e1;
  g(3, 5) = -abar * abar - 1.0;
}

// Entries that vanish identically (translation/roll invariance of the area, scale invariance
// of the angle); summation would otherwise leave roundoff there.
inline void pin_structural_zeros(Matrix4x6& g) {
  g(2, 0) = 0.0;
  g(2, 1) = 0.0;
  g(2, 5) = 0.0;
  g(3, 0) = 0.0;
  g(3, 1) = 0.0;
  g(3, 2) = 0.0;
}

}  // namespace detail

// Maps camera velocity to the rate of the moment state, evaluated at the vertices `s`.
// Rows 1-2 are the mean vertex interaction matrix in both modes.
inline Matrix4x6 dynamics_matrix(const PolygonFeatures& s, const MomentState& x, const DepthModel& depth,
                                 DynamicsMode mode = DynamicsMode::chain_rule) {
  depth.validate();
  s.validate();
  const int n = s.size();
  Matrix4x6 g = Matrix4x6::Zero();
  for (int j = 0; j < n; ++j) g.topRows<2>() += interaction_matrix(s.vertex(j), depth);
  g.topRows<2>() /= n;

  if (mode == DynamicsMode::closed_form) {
    detail::require_area(polygon_area(s));
    detail::closed_form_rows(s, x, depth, g);
    return g;
  }

  const Eigen::Matrix2Xd ga = area_gradient(s);
  const Eigen::Matrix2Xd gt = angle_gradient(s);
  const double inv_area = 1.0 / polygon_area(s);
  for (int j = 0; j < n; ++j) {
    const Matrix2x6 L = interaction_matrix(s.vertex(j), depth);
    g.row(2) += inv_area * (ga.col(j).transpose() * L);
    g.row(3) += gt.col(j).transpose() * L;
  }
  detail::pin_structural_zeros(g);
  return g;
}

struct PropagatedState {
  PolygonFeatures polygon;
  MomentState state;
};

// One explicit-Euler step of the coupled vertex/state model. `flow` is the image-plane
// target motion (2 x N), or empty for a static target. Writes the successor into `out`,
// reusing its storage.
inline void propagate_into(const PolygonFeatures& s, const MomentState& x, const Vector6d& nu,
                           const Eigen::Matrix2Xd& flow, double dt, const DepthModel& depth, DynamicsMode mode,
                           PropagatedState& out) {
  const int n = s.size();
  const bool has_flow = flow.cols() != 0;
  if (has_flow && flow.cols() != n) throw InvalidArgument("flow must have one column per vertex");
  if (!(dt > 0.0)) throw InvalidArgument("propagate: dt must be positive");
  if (!(depth.z > 0.0)) throw InvalidArgument("propagate: depth must be positive");

  // Geometry of the current polygon.
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  double dsum = 0.0;
  for (int j = 0; j < n; ++j) {
    const int k = (j + 1) % n;
    c += s.vertices.col(j);
    dsum += s.vertices(0, j) * s.vertices(1, k) - s.vertices(0, k) * s.vertices(1, j);
  }
  c /= n;
  const double area = 0.5 * std::abs(dsum);
  detail::require_area(area);
  const double half_sign = dsum > 0.0 ? 0.5 : -0.5;
  const auto [e1, e2] = detail::angle_terms(s, c);
  const double abar = e2 / e1;
  const double inv_area = 1.0 / area;
  const double iz = 1.0 / depth.z;

  Matrix4x6 g = Matrix4x6::Zero();
  Eigen::Vector4d flow_rate = Eigen::Vector4d::Zero();
  out.polygon.vertices.resize(2, n);
  out.polygon.reference_pair = s.reference_pair;
  for (int j = 0; j < n; ++j) {
    const int next = (j + 1) % n;
    const int prev = (j + n - 1) % n;
    const double xj = s.vertices(0, j);
    const double yj = s.vertices(1, j);
    Eigen::Matrix<double, 1, 6> rx;
    Eigen::Matrix<double, 1, 6> ry;
    rx << -iz, 0.0, xj * iz, xj * yj, -(1.0 + xj * xj), yj;
    ry << 0.0, -iz, yj * iz, 1.0 + yj * yj, -xj * yj, -xj;

    const double ax = half_sign * (s.vertices(1, next) - s.vertices(1, prev));
    const double ay = half_sign * (-s.vertices(0, next) + s.vertices(0, prev));
    double cj = -2.0 / n;
    if (j == s.reference_pair[0]) cj += 1.0;
    if (j == s.reference_pair[1]) cj += 1.0;
    const double bx = -cj * abar / e1;
    const double by = cj / e1;

    g.row(0) += rx;
    g.row(1) += ry;
    g.row(2) += ax * rx + ay * ry;
    g.row(3) += bx * rx + by * ry;

    double vx = rx.dot(nu);
    double vy = ry.dot(nu);
    if (has_flow) {
      const double fx = flow(0, j);
      const double fy = flow(1, j);
      flow_rate[0] += fx;
      flow_rate[1] += fy;
      flow_rate[2] += ax * fx + ay * fy;
      flow_rate[3] += bx * fx + by * fy;
      vx += fx;
      vy += fy;
    }
    out.polygon.vertices(0, j) = xj + vx * dt;
    out.polygon.vertices(1, j) = yj + vy * dt;
  }
  g.topRows<2>() /= n;
  g.row(2) *= inv_area;
  flow_rate.head<2>() /= n;
  flow_rate[2] *= inv_area;

  if (mode == DynamicsMode::closed_form) {
    detail::closed_form_rows(s, x, depth, g);
  } else {
    detail::pin_structural_zeros(g);
  }

  out.state.value = x.value + (g * nu + flow_rate) * dt;

  const double next_area = polygon_area(out.polygon);
  if (!(next_area > kAreaEpsilon)) {
    throw StepDegeneracy("propagated polygon is degenerate (area " + std::to_string(next_area) + ")");
  }
}

inline PropagatedState propagate_discrete(const PolygonFeatures& s, const MomentState& x, const CameraVelocity& nu,
                                          const Eigen::Matrix2Xd& flow, double dt, const DepthModel& depth,
                                          DynamicsMode mode = DynamicsMode::chain_rule) {
  s.validate();
  PropagatedState out;
  propagate_into(s, x, nu.twist, flow, dt, depth, mode, out);
  return out;
}

}  // namespace vsnmpc
