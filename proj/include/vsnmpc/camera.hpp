#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "vsnmpc/errors.hpp"

namespace vsnmpc {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix2x6 = Eigen::Matrix<double, 2, 6>;
using Matrix4x6 = Eigen::Matrix<double, 4, 6>;

// Axis-aligned rectangle on the normalized image plane.
struct FovRect {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

struct CameraIntrinsics {
  double alpha_x = 500.0;  // px
  double alpha_y = 500.0;  // px
  double c_u = 320.0;      // px
  double c_v = 240.0;      // px
  double width = 640.0;    // px
  double height = 480.0;   // px

  void validate() const {
    if (!(alpha_x > 0.0) || !(alpha_y > 0.0)) {
      throw InvalidArgument("intrinsics: focal lengths must be positive");
    }
    if (!(c_u > 0.0 && c_u < width) || !(c_v > 0.0 && c_v < height)) {
      throw InvalidArgument("intrinsics: principal point must lie inside the image");
    }
  }

  // The full image expressed on the normalized plane.
  FovRect fov() const {
    return {-c_u / alpha_x, (width - c_u) / alpha_x, -c_v / alpha_y, (height - c_v) / alpha_y};
  }
};

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

struct NormalizedPoint {
  double x = 0.0;
  double y = 0.0;
};

// Camera spatial velocity in the camera frame: [nu_x, nu_y, nu_z, omega_x, omega_y, omega_z],
// m/s and rad/s.
struct CameraVelocity {
  Vector6d twist = Vector6d::Zero();

  CameraVelocity() = default;
  explicit CameraVelocity(const Vector6d& t) : twist(t) {}
  CameraVelocity(const Eigen::Vector3d& linear, const Eigen::Vector3d& angular) {
    twist << linear, angular;
  }

  double nu_x() const { return twist[0]; }
  double nu_y() const { return twist[1]; }
  double nu_z() const { return twist[2]; }
  double omega_x() const { return twist[3]; }
  double omega_y() const { return twist[4]; }
  double omega_z() const { return twist[5]; }
  Eigen::Vector3d linear() const { return twist.head<3>(); }
  Eigen::Vector3d angular() const { return twist.tail<3>(); }
};

enum class VelocityAxis : int { nu_x = 0, nu_y, nu_z, omega_x, omega_y, omega_z };

// Which camera velocity components are actuated.
class ActuationMask {
 public:
  ActuationMask() { enabled_.fill(true); }
  explicit ActuationMask(const std::array<bool, 6>& enabled) : enabled_(enabled) {
    if (count() == 0) throw InvalidArgument("actuation mask must enable at least one component");
  }

  static ActuationMask full() { return ActuationMask(); }
  // Multirotor in velocity-control mode: linear velocities and yaw rate.
  static ActuationMask uav() { return ActuationMask({true, true, true, false, false, true}); }

  bool enabled(int axis) const { return enabled_[static_cast<std::size_t>(axis)]; }
  bool enabled(VelocityAxis axis) const { return enabled(static_cast<int>(axis)); }
  const std::array<bool, 6>& flags() const { return enabled_; }

  int count() const {
    int c = 0;
    for (bool e : enabled_) c += e ? 1 : 0;
    return c;
  }

  std::vector<int> indices() const {
    std::vector<int> idx;
    for (int i = 0; i < 6; ++i)
      if (enabled_[static_cast<std::size_t>(i)]) idx.push_back(i);
    return idx;
  }

  Eigen::VectorXd select(const Vector6d& full) const {
    Eigen::VectorXd out(count());
    int k = 0;
    for (int i = 0; i < 6; ++i)
      if (enabled_[static_cast<std::size_t>(i)]) out[k++] = full[i];
    return out;
  }

  // Inverse of select(): disabled components are zero.
  Vector6d expand(const Eigen::Ref<const Eigen::VectorXd>& masked) const {
    if (masked.size() != count()) throw InvalidArgument("masked vector has wrong length");
    Vector6d out = Vector6d::Zero();
    int k = 0;
    for (int i = 0; i < 6; ++i)
      if (enabled_[static_cast<std::size_t>(i)]) out[i] = masked[k++];
    return out;
  }

  bool operator==(const ActuationMask&) const = default;

 private:
  std::array<bool, 6> enabled_{};
};

// Single depth shared by all features.
struct DepthModel {
  double z = 1.0;  // m

  void validate() const {
    if (!(z > 0.0)) throw InvalidArgument("depth must be positive");
  }
};

inline NormalizedPoint pixel_to_normalized(const PixelPoint& p, const CameraIntrinsics& k) {
  return {(p.u - k.c_u) / k.alpha_x, (p.v - k.c_v) / k.alpha_y};
}

inline PixelPoint normalized_to_pixel(const NormalizedPoint& s, const CameraIntrinsics& k) {
  return {s.x * k.alpha_x + k.c_u, s.y * k.alpha_y + k.c_v};
}

// Point-feature interaction matrix: d/dt [x, y] = L * nu for a static point at depth z.
inline Matrix2x6 interaction_matrix(const NormalizedPoint& s, const DepthModel& depth) {
  if (!(depth.z > 0.0)) throw InvalidArgument("interaction_matrix: depth must be positive");
  const double iz = 1.0 / depth.z;
  const double x = s.x;
  const double y = s.y;
  Matrix2x6 L;
  L << -iz, 0.0, x * iz, x * y, -(1.0 + x * x), y,  //
      0.0, -iz, y * iz, 1.0 + y * y, -x * y, -x;
  return L;
}

struct ColumnPartition {
  Eigen::Matrix<double, 2, 4> planar;  // columns nu_x, nu_y, omega_x, omega_y
  Eigen::Matrix2d axial;               // columns nu_z, omega_z
};

inline ColumnPartition partition_columns(const Matrix2x6& L) {
  ColumnPartition p;
  p.planar << L.col(0), L.col(1), L.col(3), L.col(4);
  p.axial << L.col(2), L.col(5);
  return p;
}

inline Matrix2x6 reassemble_columns(const ColumnPartition& p) {
  Matrix2x6 L;
  L << p.planar.col(0), p.planar.col(1), p.axial.col(0), p.planar.col(2), p.planar.col(3),
      p.axial.col(1);
  return L;
}

// Drops the columns of disabled velocity components, preserving column order.
template <typename Derived>
Eigen::MatrixXd apply_actuation_mask(const Eigen::MatrixBase<Derived>& L, const ActuationMask& mask) {
  if (L.cols() != 6) throw InvalidArgument("apply_actuation_mask expects six columns");
  if (mask.count() == 0) throw InvalidArgument("apply_actuation_mask: empty mask");
  Eigen::MatrixXd out(L.rows(), mask.count());
  int k = 0;
  for (int i = 0; i < 6; ++i)
    if (mask.enabled(i)) out.col(k++) = L.col(i);
  return out;
}

// Re-expresses a velocity measured in the tilted body camera frame in the virtual level
// frame (optical axis along gravity). The body attitude relative to the level frame is an
// intrinsic roll (about x) followed by pitch (about y); both blocks are rotated by the
// inverse of that rotation. Yaw is untouched.
inline CameraVelocity level_frame_velocity(const CameraVelocity& body, double roll, double pitch) {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  if (!(std::abs(roll) < kHalfPi) || !(std::abs(pitch) < kHalfPi)) {
    throw InvalidArgument("level_frame_velocity: tilt must be below pi/2");
  }
  const Eigen::Matrix3d body_attitude =
      (Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()) * Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()))
          .toRotationMatrix();
  const Eigen::Matrix3d to_level = body_attitude.transpose();
  return CameraVelocity(to_level * body.linear(), to_level * body.angular());
}

// Rigid transform taking camera-frame coordinates to world coordinates.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation.transpose() * (world - translation);
  }
};

// Perspective division onto the normalized plane; the point must be in front of the camera.
inline NormalizedPoint project_to_normalized(const Eigen::Vector3d& p_camera) {
  if (!(p_camera.z() > 0.0)) throw InvalidArgument("point is not in front of the camera");
  return {p_camera.x() / p_camera.z(), p_camera.y() / p_camera.z()};
}

}  // namespace vsnmpc
