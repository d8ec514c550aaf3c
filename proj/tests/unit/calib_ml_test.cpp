#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lgcalib/calib_ml.hpp"
#include "lgcalib/error.hpp"
#include "sim_fixture.hpp"
#include "test_util.hpp"

namespace lgcalib {
namespace {

using testing::SimRun;
using testing::zero_noise_run;

Trajectory two_pose_trajectory(const RigidTransform& a, const RigidTransform& b) {
  return Trajectory({{0.0, a}, {1.0, b}});
}

TEST(BasePoses, IdentityExtrinsicGivesGinsPoses) {
  std::mt19937_64 rng(1);
  const RigidTransform a = testing::random_transform(rng);
  const RigidTransform b = testing::random_transform(rng);
  const BasePoseSet p = init_base_poses(two_pose_trajectory(a, b), {0.0, 1.0}, RigidTransform());
  ASSERT_EQ(p.size(), 2u);
  EXPECT_LT(extrinsic_error(p.poses[0], a).trans_m, 1e-15);
  EXPECT_LT(extrinsic_error(p.poses[1], b).rot_deg, 1e-12);
}

TEST(BasePoses, TranslationExtrinsicFromIdentityPose) {
  const BasePoseSet p = init_base_poses(two_pose_trajectory(RigidTransform(), RigidTransform()), {0.5},
                                        RigidTransform::from_translation(1, 0, 0));
  EXPECT_EQ(p.poses[0].translation(), Vector3(1, 0, 0));
  EXPECT_EQ(p.stamps[0], 0.5);
}

TEST(BasePoses, StampOutsideTrajectoryIsOutOfRange) {
  try {
    init_base_poses(two_pose_trajectory(RigidTransform(), RigidTransform()), {2.0}, RigidTransform());
    FAIL();
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOutOfRange);
  }
}

TEST(BasePoses, ZeroNoiseMatchesTrueBasePoses) {
  const SimRun& run = zero_noise_run();
  const BasePoseSet p = init_base_poses(run.dataset.gins, run.keyframes.stamps, run.t_g_l[0]);
  const BasePoseSet truth = run.true_base_poses();
  for (std::size_t k = 0; k < p.size(); ++k) {
    EXPECT_LT(extrinsic_error(p.poses[k], truth.poses[k]).trans_m, 1e-6);
    EXPECT_LT(extrinsic_error(p.poses[k], truth.poses[k]).rot_deg, 1e-6);
  }
}

std::vector<RigidTransform> perturbed(const std::vector<RigidTransform>& l0_lm, double rot_deg, double trans_m,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RigidTransform> out = l0_lm;
  for (std::size_t s = 1; s < out.size(); ++s) {
    Twist6 xi;
    xi.head<3>() = testing::random_unit(rng) * deg2rad(rot_deg);
    xi.tail<3>() = testing::random_unit(rng) * trans_m;
    out[s] = out[s] * exp_map(xi);
  }
  return out;
}

TEST(MultiLidar, TruthIsAFixpoint) {
  const SimRun& run = zero_noise_run();
  const MultiLidarResult r = calibrate_multi_lidar(run.keyframes, run.true_base_poses(), run.l0_lm, run.t_g_l[0]);
  EXPECT_EQ(r.extrinsics[0].translation(), Vector3::Zero());
  const ExtrinsicError e = extrinsic_error(r.extrinsics[1], run.l0_lm[1]);
  EXPECT_LT(e.rot_deg, 1e-3);
  EXPECT_LT(e.trans_m, 1e-3);
  // The first base pose is the gauge anchor.
  EXPECT_EQ(r.base_poses.poses[0].translation(), run.true_base_poses().poses[0].translation());
}

TEST(MultiLidar, RecoversNonOverlappingSensorFromPerturbation) {
  const SimRun& run = zero_noise_run();
  const MultiLidarResult r =
      calibrate_multi_lidar(run.keyframes, run.true_base_poses(), perturbed(run.l0_lm, 2.0, 0.2, 3), run.t_g_l[0]);
  const ExtrinsicError e = extrinsic_error(r.extrinsics[1], run.l0_lm[1]);
  EXPECT_LT(e.rot_deg, 0.1);
  EXPECT_LT(e.trans_m, 0.02);
  EXPECT_GT(r.correspondences, 1000u);
}

// Shorter keyframe list so repeated solves stay cheap.
const SimRun& sparse_run() {
  static const SimRun run = testing::simulate_run(sim::two_sensor_config(3), "sparse", {4.0, 45.0, 0.1});
  return run;
}

TEST(MultiLidar, GaugeFixedOptimumIsUnique) {
  const SimRun& run = sparse_run();
  MultiLidarOptions opt;
  opt.converged_rot_deg = 1e-4;
  opt.converged_trans_m = 1e-6;
  const MultiLidarResult ref = calibrate_multi_lidar(run.keyframes, run.true_base_poses(), run.l0_lm, run.t_g_l[0], opt);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const MultiLidarResult r = calibrate_multi_lidar(run.keyframes, run.true_base_poses(),
                                                     perturbed(run.l0_lm, 0.5, 0.05, seed), run.t_g_l[0], opt);
    const ExtrinsicError e = extrinsic_error(r.extrinsics[1], ref.extrinsics[1]);
    EXPECT_LT(e.rot_deg, 1e-3) << seed;
    EXPECT_LT(e.trans_m, 1e-4) << seed;
  }
}

TEST(MultiLidar, InvariantToWorldRelabeling) {
  const SimRun& run = sparse_run();
  const std::vector<RigidTransform> init = perturbed(run.l0_lm, 1.0, 0.1, 5);
  const MultiLidarResult a = calibrate_multi_lidar(run.keyframes, run.true_base_poses(), init, run.t_g_l[0]);

  std::mt19937_64 rng(8);
  const RigidTransform relabel = testing::random_transform(rng, 2.0, 50.0);
  KeyframeSet moved = run.keyframes;
  for (auto& g : moved.gins) g = relabel * g;
  for (auto& g : moved.gins_start) g = relabel * g;
  BasePoseSet poses = run.true_base_poses();
  for (auto& p : poses.poses) p = relabel * p;
  const MultiLidarResult b = calibrate_multi_lidar(moved, poses, init, run.t_g_l[0]);

  const ExtrinsicError e = extrinsic_error(b.extrinsics[1], a.extrinsics[1]);
  EXPECT_LT(e.rot_deg, 1e-4);
  EXPECT_LT(e.trans_m, 1e-5);
}

TEST(MultiLidar, SameSensorTermsReduceToLidarGinsObjective) {
  const SimRun& run = sparse_run();
  const std::vector<RigidTransform> init = perturbed(run.l0_lm, 1.0, 0.1, 6);
  MultiLidarOptions own;
  own.cross_sensor = false;
  // Without cross terms sensor 1 is tied to the base only through the
  // trajectory, so planar motion leaves its vertical offset unconstrained, as in
  // LiDAR-GINS calibration.
  EXPECT_THROW(calibrate_multi_lidar(run.keyframes, run.true_base_poses(), init, run.t_g_l[0], own), CalibError);
  own.lm.max_condition = 0.0;
  const MultiLidarResult a = calibrate_multi_lidar(run.keyframes, run.true_base_poses(), init, run.t_g_l[0], own);
  const MultiLidarResult b = calibrate_multi_lidar(run.keyframes, run.true_base_poses(), init, run.t_g_l[0]);
  EXPECT_LT(a.correspondences, b.correspondences);
  EXPECT_LT(extrinsic_error(a.extrinsics[1], run.l0_lm[1]).rot_deg, 0.05);
  // Only the offset along the vertical, seen from the base sensor, is free.
  const Vector3 up = run.t_g_l[0].rotation().inverse() * Vector3::UnitZ();
  const Vector3 dt = a.extrinsics[1].translation() - run.l0_lm[1].translation();
  EXPECT_LT((dt - dt.dot(up) * up).norm(), 0.01);
  // Cross terms fix the z.
  EXPECT_LT(extrinsic_error(b.extrinsics[1], run.l0_lm[1]).trans_m, 1e-3);
}

}  // namespace
}  // namespace lgcalib
