#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace lgcalib {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;

/// Tangent-space coordinates of SE(3), rotation first: [wx, wy, wz, vx, vy, vz].
/// The height observation places h_G in slot 5 (z-translation).
using Twist6 = Vector6;

/// Rigid-body transform stored as a unit quaternion (Hamilton) and a
/// translation. `T_b_a * p` maps a point expressed in frame a into frame b.
class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Eigen::Quaterniond& rotation, const Vector3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vector3& t);
  static RigidTransform from_translation(double x, double y, double z) {
    return from_translation(Vector3(x, y, z));
  }
  static RigidTransform from_rotation(const Eigen::Quaterniond& q);
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);
  /// Z-Y-X (yaw, pitch, roll) Euler angles in radians.
  static RigidTransform from_ypr(double yaw, double pitch, double roll,
                                 const Vector3& t = Vector3::Zero());

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  Matrix3 rotation_matrix() const { return rotation_.toRotationMatrix(); }
  const Vector3& translation() const { return translation_; }
  Eigen::Matrix4d matrix() const;

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& other) const;
  Vector3 operator*(const Vector3& p) const { return rotation_ * p + translation_; }

  /// Rotation angle in [0, pi].
  double angle() const;
  /// Yaw, pitch, roll (Z-Y-X) in radians.
  Vector3 ypr() const;

 private:
  Eigen::Quaterniond rotation_ = Eigen::Quaterniond::Identity();
  Vector3 translation_ = Vector3::Zero();
};

Matrix3 skew(const Vector3& v);

RigidTransform exp_map(const Twist6& xi);
/// Throws CalibError(kAngleNearPi) when the rotation angle is >= pi - 1e-6.
Twist6 log_map(const RigidTransform& t);

Eigen::Quaterniond so3_exp(const Vector3& omega);

/// Adjoint in [omega, v] ordering: T * Exp(xi) * T^-1 = Exp(Ad_T xi).
Matrix6 adjoint(const RigidTransform& t);

Matrix3 so3_left_jacobian(const Vector3& omega);
Matrix3 so3_left_jacobian_inverse(const Vector3& omega);
/// Right Jacobian of SE(3) and its inverse, [omega, v] ordering:
/// Exp(xi + d) ~ Exp(xi) Exp(Jr(xi) d), Log(Exp(xi) Exp(e)) ~ xi + Jr^-1(xi) e.
Matrix6 se3_right_jacobian(const Twist6& xi);
Matrix6 se3_right_jacobian_inverse(const Twist6& xi);

struct GroupOpsResult {
  RigidTransform compose;
  RigidTransform inverse_of_a;
  Vector3 apply;
};

/// compose = a * b, inverse_of_a = a^-1, apply = a * p.
GroupOpsResult group_ops(const RigidTransform& a, const RigidTransform& b, const Vector3& p);

/// Plane n . x + d = 0 with unit normal.
struct PlaneModel {
  Vector3 normal = Vector3::UnitZ();
  double intercept = 0.0;

  /// Normalizes and flips the plane so that normal.z() >= 0.
  static PlaneModel canonical(const Vector3& normal, double intercept);

  double signed_distance(const Vector3& p) const { return normal.dot(p) + intercept; }
  /// Plane expressed in frame a given T_b_a and this plane in frame b.
  PlaneModel pulled_back(const RigidTransform& t_b_a) const;
};

/// Rodrigues rotation taking source.normal onto target.normal with
/// translation (0, 0, source.intercept - target.intercept). Parallel normals
/// yield the identity rotation; antiparallel normals are rejected.
RigidTransform rotation_between_planes(const PlaneModel& source, const PlaneModel& target);

struct ExtrinsicError {
  double rot_deg = 0.0;
  double trans_m = 0.0;
};

/// Unsquared geodesic rotation distance (degrees) and translation distance (m).
ExtrinsicError extrinsic_error(const RigidTransform& estimate, const RigidTransform& ground_truth);

struct TimedPose {
  double time = 0.0;
  RigidTransform pose;
};

/// Geodesic interpolation a.pose * Exp(s * Log(a.pose^-1 * b.pose)).
RigidTransform interpolate_pose(const TimedPose& a, const TimedPose& b, double t);

constexpr double kPi = 3.14159265358979323846;
constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace lgcalib
