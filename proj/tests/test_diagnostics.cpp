#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vsnmpc/diagnostics.hpp"

using namespace vsnmpc;
using vsnmpc::testing::square;

namespace {

OcpConfig config() {
  OcpConfig c;
  c.constraints.visibility.gamma = 0.1;
  c.constraints.visibility.fov = FovRect{-0.64, 0.64, -0.48, 0.48};
  c.constraints.area = AreaBounds{0.01, 0.5, 0.02};
  return c;
}

}  // namespace

TEST(LipschitzLf, WorkedExample) {
  InputLimits lim;
  lim.nu_max = {1.0, 1.0, 1.0};
  lim.omega_max = {0.5, 0.5, 0.5};
  EXPECT_NEAR(lipschitz_Lf(lim, {10.0}, 0.1), std::sqrt(2.0 * 4.0804), 1e-12);
  EXPECT_NEAR(lipschitz_Lf(lim, {10.0}, 0.1), 2.85671, 1e-5);
}

TEST(LipschitzLf, SmallStepLimitAndMonotone) {
  InputLimits lim;
  EXPECT_NEAR(lipschitz_Lf(lim, {1.0}, 1e-9), std::sqrt(8.0), 1e-8);
  double prev = 0.0;
  for (double v : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    lim.nu_max[2] = v;
    const double l = lipschitz_Lf(lim, {2.0}, 0.1);
    EXPECT_GE(l, prev);
    prev = l;
  }
  EXPECT_THROW(lipschitz_Lf(lim, {0.0}, 0.1), InvalidArgument);
}

TEST(LipschitzLF, BoxAndWeights) {
  StateBox box;
  box.bound = Eigen::Vector4d::Ones();
  EXPECT_EQ(lipschitz_LF(box, Eigen::Vector4d::Ones()), 4.0);
  EXPECT_EQ(lipschitz_LF(box, Eigen::Vector4d(1, 3, 2, 1)), 12.0);
  const auto b = make_state_box(config().constraints, 5.0);
  EXPECT_NEAR(b.bound[0], 0.64, 1e-15);
  EXPECT_NEAR(b.bound[1], 0.48, 1e-15);
  EXPECT_NEAR(b.bound[2], -std::log(0.01), 1e-15);
  EXPECT_EQ(b.bound[3], 5.0);
}

TEST(LipschitzLE, Formula) { EXPECT_NEAR(lipschitz_LE(0.2, Eigen::Vector4d(1, 5, 2, 3)), 2.0, 1e-15); }

TEST(PredictionBound, GeometricSum) {
  EXPECT_EQ(prediction_error_bound(1, 0.3, 1.7), 0.3);
  EXPECT_NEAR(prediction_error_bound(3, 0.1, 2.0), 0.7, 1e-15);
  EXPECT_NEAR(prediction_error_bound(4, 0.1, 1.0), 0.4, 1e-15);
  EXPECT_EQ(prediction_error_bound(0, 0.1, 2.0), 0.0);
  // direct summation
  for (double lf : {0.5, 0.99, 1.3, 2.7}) {
    double s = 0.0;
    for (int j = 0; j < 6; ++j) s += std::pow(lf, j);
    EXPECT_NEAR(geometric_sum(lf, 6), s, 1e-12 * s);
  }
}

TEST(FeasibilityBound, HandComputedTable) {
  const auto b = disturbance_feasibility_bound(1.0, 0.5, 2.0, 1.2, 5);
  const std::vector<double> denom{4.1472, 7.6032, 10.4832, 12.8832, 14.8832};
  ASSERT_EQ(b.per_m.size(), 5u);
  for (std::size_t m = 0; m < 5; ++m) EXPECT_NEAR(b.per_m[m], 0.5 / denom[m], 1e-12) << m;
  EXPECT_NEAR(b.value, 0.033595, 1e-6);
}

TEST(FeasibilityBound, UnitLipschitzAndScaling) {
  const auto b = disturbance_feasibility_bound(2.0, 1.0, 4.0, 1.0, 3);
  for (std::size_t m = 0; m < 3; ++m) EXPECT_NEAR(b.per_m[m], 1.0 / (4.0 * (m + 1)), 1e-15);
  const auto wide = disturbance_feasibility_bound(3.0, 1.0, 4.0, 1.0, 3);
  EXPECT_NEAR(wide.value, 2.0 * b.value, 1e-15);
  EXPECT_THROW(disturbance_feasibility_bound(0.5, 0.5, 1.0, 1.0, 3), InvalidArgument);
  EXPECT_THROW(disturbance_feasibility_bound(0.5, 0.0, 1.0, 1.0, 3), InvalidArgument);
}

TEST(CostDifference, LzmEndpoints) {
  EXPECT_EQ(lipschitz_Lzm(4, 5, 2.0, 7.0, 1.3), 2.0);
  EXPECT_NEAR(lipschitz_Lzm(2, 5, 2.0, 7.0, 1.2), 2.0 * 1.44 + 7.0 * 2.2, 1e-12);
  DiagnosticsBundle d;
  d.L_zm = {3.0, 2.0};
  EXPECT_EQ(cost_difference_bound(1, 0.0, 0.8, d), -0.8);
  EXPECT_EQ(cost_difference_bound(0, 0.5, 0.0, d), 1.5);
  EXPECT_THROW(cost_difference_bound(2, 0.0, 0.0, d), InvalidArgument);
}

TEST(Diagnostics, BundleIsConsistent) {
  const OcpConfig c = config();
  const auto s = square(0.15);
  const MomentState xd = extract_state(s);
  const auto d = compute_diagnostics(c, xd, s, {1.0}, 5.0);
  EXPECT_NEAR(d.a_eps, c.P.maxCoeff() * d.eps0 * d.eps0, 1e-15);
  EXPECT_EQ(d.a_eps_f, 0.5 * d.a_eps);
  EXPECT_EQ(d.L_zm.size(), static_cast<std::size_t>(c.horizon));
  EXPECT_EQ(d.L_zm.back(), d.L_E);
  EXPECT_GT(d.L_f_empirical, 0.0);
  EXPECT_GT(d.xi_max.value, 0.0);
  EXPECT_EQ(d.F_lower, 0.1);
  // the quadratic terminal region stays inside the barrier-safe set
  const double r = std::sqrt(d.a_eps / c.P.minCoeff());
  EXPECT_LT(r, safe_radius(xd, c.constraints));
  EXPECT_TRUE(d.in_terminal_set(Eigen::Vector4d::Zero(), c.P));
  EXPECT_FALSE(d.in_terminal_region(Eigen::Vector4d::Constant(1.0), c.P));
}

// Disturbed rollouts stay within xi * sum L_f^j of the nominal ones, with L_f estimated by
// sampling.
TEST(PredictionBound, EmpiricalAuditOnRandomRollouts) {
  OcpConfig c = config();
  const DepthModel depth{1.5};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int steps = 5;
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double half = 0.12 + 0.04 * u(rng);
    PolygonFeatures nominal = square(half);
    for (int j = 0; j < 4; ++j) nominal.vertices.col(j) += Eigen::Vector2d(0.1 * u(rng), 0.1 * u(rng));
    const double lf = empirical_Lf(nominal, depth, c, 400, 100 + static_cast<std::uint64_t>(trial));
    PolygonFeatures actual = nominal;
    MomentState xn = extract_state(nominal);
    MomentState xa = xn;
    double xi = 0.0;
    for (int i = 1; i <= steps; ++i) {
      Vector6d nu;
      for (int k = 0; k < 6; ++k) nu[k] = 0.3 * u(rng);
      const auto pn = propagate_discrete(nominal, xn, CameraVelocity(nu), Eigen::Matrix2Xd(), c.dt, depth);
      auto pa = propagate_discrete(actual, xa, CameraVelocity(nu), Eigen::Matrix2Xd(), c.dt, depth);
      // small translation plus scaling of the true polygon
      const Eigen::Vector2d shift(2e-4 * u(rng), 2e-4 * u(rng));
      const double scale = 1.0 + 2e-4 * u(rng);
      const Eigen::Vector2d cen = pa.polygon.vertices.rowwise().mean();
      for (int j = 0; j < 4; ++j) pa.polygon.vertices.col(j) = cen + shift + scale * (pa.polygon.vertices.col(j) - cen);
      const MomentState disturbed = extract_state(pa.polygon);
      xi = std::max(xi, (disturbed.value - pa.state.value).norm());
      nominal = pn.polygon;
      xn = pn.state;
      actual = pa.polygon;
      xa = disturbed;
      if ((xa.value - xn.value).norm() > prediction_error_bound(i, xi, lf) * (1 + 1e-9)) ++violations;
    }
  }
  EXPECT_EQ(violations, 0);
}
