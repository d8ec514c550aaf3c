#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lgcalib/error.hpp"
#include "lgcalib/se3.hpp"
#include "test_util.hpp"

namespace lgcalib {
namespace {

using testing::random_transform;
using testing::random_twist;
using testing::random_unit;

// Scaling-and-squaring Taylor exponential of the 4x4 twist matrix.
Eigen::Matrix4d matrix_exponential(const Twist6& xi) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
  a.topLeftCorner<3, 3>() = skew(xi.head<3>());
  a.topRightCorner<3, 1>() = xi.tail<3>();
  int squarings = 0;
  while (a.norm() > 0.01) {
    a /= 2.0;
    ++squarings;
  }
  Eigen::Matrix4d result = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d term = Eigen::Matrix4d::Identity();
  for (int k = 1; k < 20; ++k) {
    term = term * a / static_cast<double>(k);
    result += term;
  }
  for (int i = 0; i < squarings; ++i) result = result * result;
  return result;
}

// Textbook slerp on unit quaternions.
Eigen::Vector4d slerp_coeffs(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b, double s) {
  Eigen::Vector4d qa = a.coeffs(), qb = b.coeffs();
  double c = qa.dot(qb);
  if (c < 0.0) {
    qb = -qb;
    c = -c;
  }
  const double omega = std::acos(std::min(1.0, c));
  const Eigen::Vector4d out =
      (std::sin((1 - s) * omega) * qa + std::sin(s * omega) * qb) / std::sin(omega);
  return out;
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.inverse() * b).angle();
}

TEST(Se3, ExpOfZeroIsIdentity) {
  const RigidTransform t = exp_map(Twist6::Zero());
  EXPECT_DOUBLE_EQ(t.angle(), 0.0);
  EXPECT_DOUBLE_EQ(t.translation().norm(), 0.0);
}

TEST(Se3, ExpOfHeightTwistIsPureTranslation) {
  Twist6 xi = Twist6::Zero();
  xi[5] = 1.8;
  const RigidTransform t = exp_map(xi);
  EXPECT_DOUBLE_EQ(t.angle(), 0.0);
  EXPECT_EQ(t.translation(), Vector3(0, 0, 1.8));
}

TEST(Se3, ExpMatchesMatrixExponential) {
  Twist6 xi;
  xi << 0, 0, kPi / 2, 1, 0, 0;
  const Eigen::Matrix4d oracle = matrix_exponential(xi);
  EXPECT_LT((exp_map(xi).matrix() - oracle).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(exp_map(xi).angle(), kPi / 2, 1e-12);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const Twist6 r = random_twist(rng, 3.0, 4.0);
    EXPECT_LT((exp_map(r).matrix() - matrix_exponential(r)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Se3, ExpSmallAngleSeriesIsContinuous) {
  std::mt19937_64 rng(2);
  for (double angle : {1e-3, 1.1e-4, 0.9e-4, 1e-6, 1e-9}) {
    Twist6 xi = random_twist(rng, 1.0, 2.0);
    xi.head<3>() = xi.head<3>().normalized() * angle;
    EXPECT_LT((exp_map(xi).matrix() - matrix_exponential(xi)).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_LT((log_map(exp_map(xi)) - xi).norm(), 1e-12);
  }
}

TEST(Se3, LogOfIdentityAndTranslation) {
  EXPECT_EQ(log_map(RigidTransform()), Twist6::Zero());
  const Twist6 xi = log_map(RigidTransform::from_translation(0, 0, 2.5));
  Twist6 expected = Twist6::Zero();
  expected[5] = 2.5;
  EXPECT_LT((xi - expected).norm(), 1e-15);
}

TEST(Se3, ExpLogRoundTrip) {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Twist6 xi = random_twist(rng, 2.5, 10.0);
    worst = std::max(worst, (log_map(exp_map(xi)) - xi).norm());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Se3, LogRejectsAngleNearPi) {
  const RigidTransform t = RigidTransform::from_rotation(
      Eigen::Quaterniond(Eigen::AngleAxisd(kPi - 1e-8, Vector3::UnitX())));
  try {
    log_map(t);
    FAIL() << "expected AngleNearPi";
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAngleNearPi);
  }
  EXPECT_NO_THROW(log_map(RigidTransform::from_rotation(
      Eigen::Quaterniond(Eigen::AngleAxisd(kPi - 1e-4, Vector3::UnitX())))));
}

TEST(Se3, GroupOpsBasics) {
  std::mt19937_64 rng(4);
  const RigidTransform b = random_transform(rng);
  const auto r = group_ops(RigidTransform(), b, Vector3::Zero());
  EXPECT_LT((r.compose.matrix() - b.matrix()).norm(), 1e-15);

  const auto r2 = group_ops(RigidTransform::from_translation(1, 2, 3), b, Vector3::Zero());
  EXPECT_EQ(r2.apply, Vector3(1, 2, 3));
}

TEST(Se3, GroupAxiomsAgainstHomogeneousMatrices) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const RigidTransform a = random_transform(rng), b = random_transform(rng), c = random_transform(rng);
    const Vector3 p = testing::random_vector(rng, 10.0);
    const auto r = group_ops(a, b, p);
    const Eigen::Matrix4d ab = a.matrix() * b.matrix();
    EXPECT_LT((r.compose.matrix() - ab).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((r.compose * p - a * (b * p)).norm(), 1e-9);
    EXPECT_LT((r.inverse_of_a * (a * p) - p).norm(), 1e-9);
    const Eigen::Vector4d ph = a.matrix() * p.homogeneous();
    EXPECT_LT((r.apply - ph.head<3>()).norm(), 1e-12);
    const RigidTransform left = (a * b) * c, right = a * (b * c);
    EXPECT_LT(rotation_distance(left, right), 1e-9);
    EXPECT_LT((left.translation() - right.translation()).norm(), 1e-9);
    const RigidTransform id = a * a.inverse();
    EXPECT_LT(id.angle(), 1e-9);
    EXPECT_LT(id.translation().norm(), 1e-9);
    EXPECT_NEAR(a.rotation().norm(), 1.0, 1e-9);
  }
}

TEST(Se3, AdjointMatchesConjugation) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t = random_transform(rng);
    const Twist6 xi = random_twist(rng, 1.0, 1.0);
    const RigidTransform lhs = t * exp_map(xi) * t.inverse();
    const RigidTransform rhs = exp_map(adjoint(t) * xi);
    EXPECT_LT((lhs.matrix() - rhs.matrix()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Se3, RightJacobianFiniteDifference) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const Twist6 xi = random_twist(rng, 2.5, 3.0);
    const Matrix6 jr = se3_right_jacobian(xi);
    const Matrix6 jr_inv = se3_right_jacobian_inverse(xi);
    EXPECT_LT((jr * jr_inv - Matrix6::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    const double h = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Twist6 e = Twist6::Zero();
      e[k] = h;
      // Log(Exp(xi) Exp(e)) ~ xi + Jr^-1 e
      const Twist6 numeric = (log_map(exp_map(xi) * exp_map(e)) - log_map(exp_map(xi) * exp_map(-e))) / (2 * h);
      EXPECT_LT((numeric - jr_inv.col(k)).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Se3, RotationBetweenPlanesExamples) {
  const PlaneModel up{Vector3::UnitZ(), 0.0};
  const RigidTransform same = rotation_between_planes(up, up);
  EXPECT_DOUBLE_EQ(same.angle(), 0.0);
  EXPECT_DOUBLE_EQ(same.translation().norm(), 0.0);

  const RigidTransform t = rotation_between_planes(PlaneModel{Vector3::UnitX(), 0.0}, up);
  EXPECT_LT((t.rotation_matrix() * Vector3::UnitX() - Vector3::UnitZ()).norm(), 1e-12);
  const Eigen::AngleAxisd aa(t.rotation());
  EXPECT_NEAR(aa.angle(), kPi / 2, 1e-12);
  EXPECT_LT((aa.axis() - Vector3(0, -1, 0)).norm(), 1e-12);

  const RigidTransform shift = rotation_between_planes(PlaneModel{Vector3::UnitZ(), 1.5}, up);
  EXPECT_DOUBLE_EQ(shift.angle(), 0.0);
  EXPECT_EQ(shift.translation(), Vector3(0, 0, 1.5));
}

TEST(Se3, RotationBetweenPlanesProperty) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 2000; ++i) {
    const Vector3 n1 = random_unit(rng), n2 = random_unit(rng);
    if (n1.dot(n2) < -0.999) continue;
    const RigidTransform t = rotation_between_planes(PlaneModel{n1, 0.3}, PlaneModel{n2, -0.2});
    EXPECT_LT((t.rotation_matrix() * n1 - n2).norm(), 1e-9);
    EXPECT_LT((t.translation() - Vector3(0, 0, 0.5)).norm(), 1e-15);
  }
}

TEST(Se3, PlaneCanonicalAndPullBack) {
  const PlaneModel p = PlaneModel::canonical(Vector3(0, 0, -2), 3.0);
  EXPECT_EQ(p.normal, Vector3(0, 0, 1));
  EXPECT_DOUBLE_EQ(p.intercept, -1.5);

  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform t_b_a = random_transform(rng);
    const PlaneModel plane_b{random_unit(rng), 0.7};
    const PlaneModel plane_a = plane_b.pulled_back(t_b_a);
    const Vector3 x_a = testing::random_vector(rng, 5.0);
    EXPECT_NEAR(plane_a.signed_distance(x_a), plane_b.signed_distance(t_b_a * x_a), 1e-12);
  }
}

TEST(Se3, ExtrinsicErrorExamples) {
  std::mt19937_64 rng(10);
  const RigidTransform gt = random_transform(rng);
  const auto zero = extrinsic_error(gt, gt);
  EXPECT_DOUBLE_EQ(zero.rot_deg, 0.0);
  EXPECT_DOUBLE_EQ(zero.trans_m, 0.0);

  const RigidTransform base = RigidTransform::from_translation(1, 0, 0);
  const RigidTransform yawed = RigidTransform::from_ypr(deg2rad(10.0), 0, 0, Vector3(1, 0, 0));
  const auto e1 = extrinsic_error(yawed, base);
  EXPECT_NEAR(e1.rot_deg, 10.0, 1e-12);
  EXPECT_NEAR(e1.trans_m, 0.0, 1e-15);

  const auto e2 = extrinsic_error(RigidTransform::from_translation(1, 0, 0.3), base);
  EXPECT_NEAR(e2.rot_deg, 0.0, 1e-15);
  EXPECT_NEAR(e2.trans_m, 0.3, 1e-15);
}

TEST(Se3, ExtrinsicErrorRotationIsSymmetric) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const RigidTransform a = random_transform(rng), b = random_transform(rng);
    EXPECT_NEAR(extrinsic_error(a, b).rot_deg, extrinsic_error(b, a).rot_deg, 1e-9);
  }
}

TEST(Se3, InterpolatePose) {
  std::mt19937_64 rng(12);
  const TimedPose a{1.0, random_transform(rng)};
  const TimedPose b{3.0, random_transform(rng, 1.0)};
  const RigidTransform at_a = interpolate_pose(a, b, 1.0);
  EXPECT_EQ(at_a.matrix(), a.pose.matrix());
  const RigidTransform at_b = interpolate_pose(a, b, 3.0);
  EXPECT_EQ(at_b.matrix(), b.pose.matrix());

  const RigidTransform mid = interpolate_pose(TimedPose{0.0, RigidTransform()},
                                              TimedPose{1.0, RigidTransform::from_translation(2, 0, 0)}, 0.5);
  EXPECT_LT((mid.translation() - Vector3(1, 0, 0)).norm(), 1e-15);

  EXPECT_THROW(interpolate_pose(a, b, 0.5), CalibError);
  EXPECT_THROW(interpolate_pose(a, b, 3.5), CalibError);
}

TEST(Se3, InterpolateRotationMatchesSlerp) {
  const RigidTransform r0 = RigidTransform::from_ypr(0.0, 0.0, 0.0);
  const RigidTransform r90 = RigidTransform::from_ypr(kPi / 2, 0.0, 0.0);
  const RigidTransform half = interpolate_pose({0.0, r0}, {1.0, r90}, 0.5);
  EXPECT_NEAR(rad2deg(half.angle()), 45.0, 1e-12);

  std::mt19937_64 rng(13);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform a = RigidTransform::from_rotation(random_transform(rng).rotation());
    const RigidTransform b = RigidTransform::from_rotation(random_transform(rng, 2.5).rotation());
    if ((a.inverse() * b).angle() > 3.0) continue;
    const double s = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Eigen::Vector4d oracle = slerp_coeffs(a.rotation(), b.rotation(), s);
    Eigen::Vector4d got = interpolate_pose({0.0, a}, {1.0, b}, s).rotation().coeffs();
    if (got.dot(oracle) < 0) got = -got;
    EXPECT_LT((got - oracle).norm(), 1e-9);
  }
}

}  // namespace
}  // namespace lgcalib
