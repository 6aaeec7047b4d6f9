#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "vsnmpc/camera.hpp"
#include "vsnmpc/errors.hpp"
#include "vsnmpc/polygon.hpp"

namespace vsnmpc {

// Translation of the whole target; a nonzero z component moves the target plane vertically.
struct RigidDrift {
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();  // m/s
};

// In-plane rotation about the base centroid.
struct RigidSpin {
  double rate = 0.0;  // rad/s
};

// Uniform scaling about the base centroid by (1 + amplitude * sin(frequency * t)).
struct Breathing {
  double amplitude = 0.0;
  double frequency = 0.0;  // rad/s
};

// Sinusoidal displacement normal to `axis`, travelling along `axis`. The phase is drawn
// from the target seed.
struct TravelingWave {
  double amplitude = 0.0;   // m
  double wavelength = 1.0;  // m
  double speed = 0.0;       // m/s
  Eigen::Vector2d axis = Eigen::Vector2d::UnitX();
};

using DeformationMode = std::variant<RigidDrift, RigidSpin, Breathing, TravelingWave>;

struct TargetSample {
  Eigen::Matrix3Xd positions;   // world, m
  Eigen::Matrix3Xd velocities;  // world, m/s
};

namespace detail {

inline double orient(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
}

inline bool segments_cross(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                           const Eigen::Vector2d& q2) {
  const double d1 = orient(q1, q2, p1);
  const double d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1);
  const double d4 = orient(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0;
}

}  // namespace detail

// True when no two non-adjacent edges intersect and the signed area is non-negligible.
inline bool is_simple_polygon(const Eigen::Matrix2Xd& v, double min_area = 1e-12) {
  const int n = static_cast<int>(v.cols());
  if (n < 3) return false;
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const int k = (j + 1) % n;
    sum += v(0, j) * v(1, k) - v(0, k) * v(1, j);
  }
  if (!(0.5 * std::abs(sum) > min_area)) return false;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (detail::segments_cross(v.col(i), v.col((i + 1) % n), v.col(j), v.col((j + 1) % n))) return false;
    }
  }
  return true;
}

// Ground-truth deformable planar target. Vertex positions are a deterministic function of
// time: drift + rotation(spin) * scale(breathing) * (base offset + wave displacement).
class DeformableTarget {
 public:
  DeformableTarget() = default;
  DeformableTarget(Eigen::Matrix2Xd base_vertices, std::vector<DeformationMode> modes, std::uint64_t seed)
      : base_(std::move(base_vertices)), modes_(std::move(modes)), seed_(seed) {
    if (base_.cols() < 3) throw InvalidArgument("target needs at least three vertices");
    base_centroid_ = base_.rowwise().mean();
    std::mt19937_64 rng(seed_);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (auto& m : modes_) {
      if (auto* w = std::get_if<TravelingWave>(&m)) {
        if (!(w->wavelength > 0.0)) throw InvalidArgument("wave wavelength must be positive");
        if (!(w->axis.norm() > 0.0)) throw InvalidArgument("wave axis must be nonzero");
        w->axis.normalize();
        wave_phase_.push_back(phase(rng));
      }
    }
  }

  int size() const { return static_cast<int>(base_.cols()); }
  const Eigen::Matrix2Xd& base_vertices() const { return base_; }
  const std::vector<DeformationMode>& modes() const { return modes_; }
  std::uint64_t seed() const { return seed_; }

  // Throws DegenerateTarget when the evaluated polygon is not simple.
  TargetSample sample(double t) const {
    if (!(t >= 0.0)) throw InvalidArgument("sample_target: t must be non-negative");
    const int n = size();
    Eigen::Vector3d drift = Eigen::Vector3d::Zero();
    double spin = 0.0;
    double scale = 1.0;
    double scale_rate = 0.0;
    for (const auto& m : modes_) {
      if (const auto* d = std::get_if<RigidDrift>(&m)) drift += d->velocity;
      if (const auto* r = std::get_if<RigidSpin>(&m)) spin += r->rate;
      if (const auto* b = std::get_if<Breathing>(&m)) {
        // d/dt of a product of factors.
        const double f = 1.0 + b->amplitude * std::sin(b->frequency * t);
        const double df = b->amplitude * b->frequency * std::cos(b->frequency * t);
        scale_rate = scale_rate * f + scale * df;
        scale *= f;
      }
    }
    const double theta = spin * t;
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    Eigen::Matrix2d skew;
    skew << 0.0, -1.0, 1.0, 0.0;

    TargetSample out{Eigen::Matrix3Xd(3, n), Eigen::Matrix3Xd(3, n)};
    Eigen::Matrix2Xd planar(2, n);
    for (int j = 0; j < n; ++j) {
      const Eigen::Vector2d b = base_.col(j);
      Eigen::Vector2d w = Eigen::Vector2d::Zero();
      Eigen::Vector2d w_rate = Eigen::Vector2d::Zero();
      std::size_t wave_index = 0;
      for (const auto& m : modes_) {
        if (const auto* wv = std::get_if<TravelingWave>(&m)) {
          const double k = 2.0 * std::numbers::pi / wv->wavelength;
          const double arg = k * (b.dot(wv->axis) - wv->speed * t) + wave_phase_[wave_index++];
          const Eigen::Vector2d normal(-wv->axis.y(), wv->axis.x());
          w += wv->amplitude * std::sin(arg) * normal;
          w_rate += -wv->amplitude * k * wv->speed * std::cos(arg) * normal;
        }
      }
      const Eigen::Vector2d local = b - base_centroid_ + w;
      const Eigen::Vector2d p = base_centroid_ + drift.head<2>() * t + scale * (rot * local);
      const Eigen::Vector2d v =
          drift.head<2>() + spin * scale * (skew * (rot * local)) + scale_rate * (rot * local) + scale * (rot * w_rate);
      planar.col(j) = p;
      out.positions.col(j) << p, drift.z() * t;
      out.velocities.col(j) << v, drift.z();
    }
    if (!is_simple_polygon(planar)) throw DegenerateTarget("target polygon is not simple at t = " + std::to_string(t));
    return out;
  }

  // Samples the target over [0, duration]; throws DegenerateTarget on the first failure.
  void validate(double duration, int samples = 200) const {
    for (int i = 0; i <= samples; ++i) sample(duration * i / samples);
  }

 private:
  Eigen::Matrix2Xd base_;
  Eigen::Vector2d base_centroid_ = Eigen::Vector2d::Zero();
  std::vector<DeformationMode> modes_;
  std::vector<double> wave_phase_;
  std::uint64_t seed_ = 0;
};

// Exact image-plane velocity of the target vertices seen by a static camera.
inline Eigen::Matrix2Xd true_flow(const DeformableTarget& target, double t, const RigidTransform& world_from_camera) {
  const TargetSample smp = target.sample(t);
  const int n = target.size();
  Eigen::Matrix2Xd flow(2, n);
  const Eigen::Matrix3d rt = world_from_camera.rotation.transpose();
  for (int j = 0; j < n; ++j) {
    const Eigen::Vector3d p = world_from_camera.to_camera(smp.positions.col(j));
    const Eigen::Vector3d v = rt * smp.velocities.col(j);
    if (!(p.z() > 0.0)) throw InvalidArgument("true_flow: vertex behind the camera");
    const double x = p.x() / p.z();
    const double y = p.y() / p.z();
    flow(0, j) = (v.x() - x * v.z()) / p.z();
    flow(1, j) = (v.y() - y * v.z()) / p.z();
  }
  return flow;
}

struct FlowEstimate {
  Eigen::Vector2d centroid_flow = Eigen::Vector2d::Zero();  // normalized units / s
  Eigen::Matrix2Xd per_vertex_flow;                         // centroid flow broadcast to every vertex

  static FlowEstimate broadcast(const Eigen::Vector2d& centroid_flow, int vertices) {
    FlowEstimate f;
    f.centroid_flow = centroid_flow;
    f.per_vertex_flow = centroid_flow.replicate(1, vertices);
    return f;
  }
};

struct CentroidSample {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  double t = 0.0;
};

// Centroid finite difference minus the motion induced by the camera.
inline FlowEstimate estimate_centroid_flow(const CentroidSample& prev, const CentroidSample& curr,
                                           const Matrix2x6& centroid_interaction, const CameraVelocity& nu_hat,
                                           int vertices) {
  const double dt = curr.t - prev.t;
  if (!(dt > 0.0)) throw InvalidArgument("estimate_centroid_flow: samples must be strictly ordered in time");
  const Eigen::Vector2d rate = (curr.centroid - prev.centroid) / dt - centroid_interaction * nu_hat.twist;
  return FlowEstimate::broadcast(rate, vertices);
}

// Holds the previous centroid sample. Returns zero flow until two samples exist.
class CentroidFlowEstimator {
 public:
  FlowEstimate update(const CentroidSample& curr, const Matrix2x6& centroid_interaction, const CameraVelocity& nu_hat,
                      int vertices) {
    FlowEstimate out = prev_ ? estimate_centroid_flow(*prev_, curr, centroid_interaction, nu_hat, vertices)
                             : FlowEstimate::broadcast(Eigen::Vector2d::Zero(), vertices);
    prev_ = curr;
    return out;
  }

  void reset() { prev_.reset(); }
  bool primed() const { return prev_.has_value(); }

 private:
  std::optional<CentroidSample> prev_;
};

}  // namespace vsnmpc
