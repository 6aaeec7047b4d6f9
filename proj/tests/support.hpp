#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>
#include <algorithm>

#include <Eigen/Core>

#include "vsnmpc/polygon.hpp"

namespace vsnmpc::testing {

// Star-shaped (hence simple) CCW polygon around a random center, with a reference pair
// whose midpoint is well away from the centroid in x.
inline PolygonFeatures random_polygon(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const Eigen::Vector2d c(0.6 * u(rng) - 0.3, 0.6 * u(rng) - 0.3);
    const double r = 0.1 + 0.2 * u(rng);
    std::vector<double> ang(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) ang[static_cast<std::size_t>(j)] = 2.0 * std::numbers::pi * (j + 0.1 + 0.8 * u(rng)) / n;
    std::sort(ang.begin(), ang.end());
    PolygonFeatures s;
    s.vertices.resize(2, n);
    for (int j = 0; j < n; ++j) {
      const double rr = r * (0.6 + 0.4 * u(rng));
      s.vertices.col(j) = c + rr * Eigen::Vector2d(std::cos(ang[static_cast<std::size_t>(j)]),
                                                   std::sin(ang[static_cast<std::size_t>(j)]));
    }
    const Eigen::Vector2d m = s.vertices.rowwise().mean();
    const double e1 = s.vertices(0, 0) + s.vertices(0, 1) - 2.0 * m.x();
    if (std::abs(e1) > 0.05 * r) return s;
  }
}

inline PolygonFeatures square(double half = 0.5) {
  Eigen::Matrix2Xd v(2, 4);
  v << half, half, -half, -half,  //
      -half, half, half, -half;
  return PolygonFeatures(v);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace vsnmpc::testing
