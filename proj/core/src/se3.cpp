#include "lgcalib/se3.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lgcalib/error.hpp"

namespace lgcalib {

namespace {

constexpr double kSmallAngle = 1e-4;
// Below this angle the Jacobian coefficients use truncated Taylor series;
// the closed forms lose digits to cancellation.
constexpr double kSeriesAngle = 0.1;
constexpr double kLogAngleLimit = kPi - 1e-6;

// Coefficients of V(w) = I + b [w]x + c [w]x^2 with b = (1-cos)/th^2,
// c = (th - sin)/th^3.
void v_coefficients(double theta, double& b, double& c) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) {
    b = 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0 * (1.0 - t2 / 90.0)));
    c = 1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0 * (1.0 - t2 / 110.0)));
  } else {
    const double half = std::sin(0.5 * theta);
    b = 2.0 * half * half / t2;
    c = (theta - std::sin(theta)) / (t2 * theta);
  }
}

// Coefficient d of V^-1 = I - 1/2 [w]x + d [w]x^2.
double v_inverse_coefficient(double theta) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) {
    return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
  }
  const double half = 0.5 * theta;
  return (1.0 - half * std::cos(half) / std::sin(half)) / t2;
}

// Q block of the SE(3) left Jacobian (rotation phi, translation rho).
Matrix3 se3_q_block(const Vector3& phi, const Vector3& rho) {
  const double theta = phi.norm();
  const Matrix3 px = skew(phi);
  const Matrix3 rx = skew(rho);
  double c1, c2, c3;
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    const double t4 = t2 * t2;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t4 * t2 / 3628800.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0 - t4 * t2 / 9979200.0;
  } else {
    const double t2 = theta * theta;
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta);
  }
  const Matrix3 pr = px * rx;
  const Matrix3 rp = rx * px;
  const Matrix3 prp = pr * px;
  return 0.5 * rx + c1 * (pr + rp + prp) + c2 * (px * pr + rp * px - 3.0 * prp) +
         c3 * (prp * px + px * prp);
}

}  // namespace

RigidTransform::RigidTransform(const Eigen::Quaterniond& rotation, const Vector3& translation)
    : rotation_(rotation.normalized()), translation_(translation) {}

RigidTransform RigidTransform::from_translation(const Vector3& t) {
  return {Eigen::Quaterniond::Identity(), t};
}

RigidTransform RigidTransform::from_rotation(const Eigen::Quaterniond& q) {
  return {q, Vector3::Zero()};
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  const Matrix3 r = m.topLeftCorner<3, 3>();
  return {Eigen::Quaterniond(r), m.topRightCorner<3, 1>()};
}

RigidTransform RigidTransform::from_ypr(double yaw, double pitch, double roll, const Vector3& t) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Vector3::UnitZ()) *
                               Eigen::AngleAxisd(pitch, Vector3::UnitY()) *
                               Eigen::AngleAxisd(roll, Vector3::UnitX());
  return {q, t};
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Quaterniond inv = rotation_.conjugate();
  RigidTransform out;
  out.rotation_ = inv;
  out.translation_ = -(inv * translation_);
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation_ = (rotation_ * other.rotation_).normalized();
  out.translation_ = rotation_ * other.translation_ + translation_;
  return out;
}

double RigidTransform::angle() const {
  const double w = std::abs(rotation_.w());
  return 2.0 * std::atan2(rotation_.vec().norm(), w);
}

Vector3 RigidTransform::ypr() const {
  const Matrix3 r = rotation_matrix();
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  return {yaw, pitch, roll};
}

Matrix3 skew(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond so3_exp(const Vector3& omega) {
  const double theta = omega.norm();
  double half_sinc;  // sin(theta/2) / theta
  if (theta < kSmallAngle) {
    half_sinc = 0.5 - theta * theta / 48.0;
  } else {
    half_sinc = std::sin(0.5 * theta) / theta;
  }
  Eigen::Quaterniond q;
  q.w() = std::cos(0.5 * theta);
  q.vec() = half_sinc * omega;
  return q.normalized();
}

RigidTransform exp_map(const Twist6& xi) {
  const Vector3 omega = xi.head<3>();
  const Vector3 v = xi.tail<3>();
  const double theta = omega.norm();
  double b, c;
  v_coefficients(theta, b, c);
  const Matrix3 wx = skew(omega);
  const Vector3 t = v + b * (wx * v) + c * (wx * (wx * v));
  return {so3_exp(omega), t};
}

Twist6 log_map(const RigidTransform& t) {
  Eigen::Quaterniond q = t.rotation();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double s = q.vec().norm();
  const double theta = 2.0 * std::atan2(s, q.w());
  if (theta >= kLogAngleLimit) {
    throw CalibError(ErrorCode::kAngleNearPi,
                     "rotation angle " + std::to_string(theta) + " rad too close to pi");
  }
  Vector3 omega;
  if (s < 1e-12) {
    // theta / s ~ 2 / w for vanishing rotation.
    omega = (2.0 / q.w()) * q.vec();
  } else {
    omega = (theta / s) * q.vec();
  }
  const Matrix3 wx = skew(omega);
  const double d = v_inverse_coefficient(theta);
  const Vector3& tr = t.translation();
  const Vector3 v = tr - 0.5 * (wx * tr) + d * (wx * (wx * tr));
  Twist6 xi;
  xi << omega, v;
  return xi;
}

Matrix6 adjoint(const RigidTransform& t) {
  const Matrix3 r = t.rotation_matrix();
  Matrix6 ad = Matrix6::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomRightCorner<3, 3>() = r;
  ad.bottomLeftCorner<3, 3>() = skew(t.translation()) * r;
  return ad;
}

Matrix3 so3_left_jacobian(const Vector3& omega) {
  double b, c;
  v_coefficients(omega.norm(), b, c);
  const Matrix3 wx = skew(omega);
  return Matrix3::Identity() + b * wx + c * wx * wx;
}

Matrix3 so3_left_jacobian_inverse(const Vector3& omega) {
  const double d = v_inverse_coefficient(omega.norm());
  const Matrix3 wx = skew(omega);
  return Matrix3::Identity() - 0.5 * wx + d * wx * wx;
}

Matrix6 se3_right_jacobian(const Twist6& xi) {
  const Vector3 omega = -xi.head<3>();
  const Vector3 v = -xi.tail<3>();
  const Matrix3 j = so3_left_jacobian(omega);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.bottomLeftCorner<3, 3>() = se3_q_block(omega, v);
  return out;
}

Matrix6 se3_right_jacobian_inverse(const Twist6& xi) {
  const Vector3 omega = -xi.head<3>();
  const Vector3 v = -xi.tail<3>();
  const Matrix3 jinv = so3_left_jacobian_inverse(omega);
  Matrix6 out = Matrix6::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.bottomLeftCorner<3, 3>() = -jinv * se3_q_block(omega, v) * jinv;
  return out;
}

GroupOpsResult group_ops(const RigidTransform& a, const RigidTransform& b, const Vector3& p) {
  return {a * b, a.inverse(), a * p};
}

PlaneModel PlaneModel::canonical(const Vector3& normal, double intercept) {
  const double norm = normal.norm();
  PlaneModel plane{normal / norm, intercept / norm};
  if (plane.normal.z() < 0.0) {
    plane.normal = -plane.normal;
    plane.intercept = -plane.intercept;
  }
  return plane;
}

PlaneModel PlaneModel::pulled_back(const RigidTransform& t_b_a) const {
  // n . (R p + t) + d = (R^T n) . p + (n . t + d)
  PlaneModel out;
  out.normal = (t_b_a.rotation().conjugate() * normal).normalized();
  out.intercept = normal.dot(t_b_a.translation()) + intercept;
  return out;
}

RigidTransform rotation_between_planes(const PlaneModel& source, const PlaneModel& target) {
  const Vector3& n1 = source.normal;
  const Vector3& n2 = target.normal;
  const Vector3 cross = n1.cross(n2);
  const double sin_theta = cross.norm();
  const double cos_theta = n1.dot(n2);
  const Vector3 t(0.0, 0.0, source.intercept - target.intercept);
  if (sin_theta < 1e-9) {
    if (cos_theta < 0.0) {
      throw CalibError(ErrorCode::kDegenerateGeometry,
                       "antiparallel plane normals have no unique aligning rotation");
    }
    return RigidTransform::from_translation(t);
  }
  const Vector3 u = cross / sin_theta;
  const double theta = std::atan2(sin_theta, cos_theta);
  const Matrix3 ux = skew(u);
  const Matrix3 r =
      Matrix3::Identity() + ux * std::sin(theta) + ux * ux * (1.0 - std::cos(theta));
  return {Eigen::Quaterniond(r), t};
}

ExtrinsicError extrinsic_error(const RigidTransform& estimate, const RigidTransform& ground_truth) {
  const RigidTransform delta =
      RigidTransform::from_rotation(ground_truth.rotation().conjugate() * estimate.rotation());
  return {rad2deg(delta.angle()), (ground_truth.translation() - estimate.translation()).norm()};
}

RigidTransform interpolate_pose(const TimedPose& a, const TimedPose& b, double t) {
  if (!(a.time < b.time) || t < a.time || t > b.time) {
    throw CalibError(ErrorCode::kOutOfRange, "interpolation time " + std::to_string(t) +
                                                 " outside [" + std::to_string(a.time) + ", " +
                                                 std::to_string(b.time) + "]");
  }
  if (t == a.time) return a.pose;
  if (t == b.time) return b.pose;
  const double s = (t - a.time) / (b.time - a.time);
  return a.pose * exp_map(s * log_map(a.pose.inverse() * b.pose));
}

}  // namespace lgcalib
