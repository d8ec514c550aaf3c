#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lgcalib/error.hpp"
#include "lgcalib/joint.hpp"
#include "lgcalib/terrain.hpp"
#include "sim_fixture.hpp"
#include "test_util.hpp"

namespace lgcalib {
namespace {

using testing::SimRun;

const SimRun& sparse_run() {
  static const SimRun run = testing::simulate_run(sim::two_sensor_config(3), "sparse", {4.0, 45.0, 0.1});
  return run;
}

KeyframeSet first_keyframes(const KeyframeSet& kf, std::size_t n) {
  KeyframeSet out = kf;
  out.stamps.resize(n);
  out.gins.resize(n);
  out.gins_start.resize(n);
  for (auto& r : out.raw) r.resize(n);
  return out;
}

// Ground truth of every joint variable; the VLiDAR is levelled on the true
// (flat) ground below the first keyframe.
JointState truth_state(const SimRun& run, const KeyframeSet& kf) {
  const BasePoseSet base = run.true_base_poses();
  GroundPatch ground;
  ground.plane = PlaneModel{};
  const RigidTransform t_vl_l0 = vlidar_extrinsic(ground, base.poses[0]);
  JointState s = initial_joint_state(kf, run.t_g_l[kf.base], run.l0_lm, base, t_vl_l0);
  s.gins.resize(kf.size());
  s.vl.resize(kf.size());
  for (std::size_t k = 0; k < kf.size(); ++k) s.gins[k] = run.gins_gt[k];
  return s;
}

std::vector<std::vector<std::shared_ptr<ScanFrame>>> frames_for(const KeyframeSet& kf, const JointState& s) {
  std::vector<std::vector<std::shared_ptr<ScanFrame>>> frames;
  const auto ext = s.sensor_extrinsics();
  for (std::size_t m = 0; m < kf.sensor_count(); ++m) frames.push_back(prepare_sensor_frames(kf, m, ext[m], {}));
  return frames;
}

TEST(JointGraph, CountsForTenKeyframes) {
  const SimRun& run = sparse_run();
  const KeyframeSet kf = first_keyframes(run.keyframes, 10);
  JointState s = truth_state(run, run.keyframes);
  s.gins.resize(10);
  s.vl.resize(10);
  const FactorGraph g = assemble_graph(kf, s, frames_for(kf, s));
  EXPECT_EQ(g.problem.num_variables(), 2u + 10u + 10u);
  EXPECT_EQ(g.free_variable_count(), 20u);  // first GINS and VLiDAR poses are anchors
  EXPECT_EQ(g.motion_factors, 9u);
  EXPECT_EQ(g.families[static_cast<std::size_t>(FactorFamily::kHeight)].size(), 1u);
  EXPECT_EQ(g.families[static_cast<std::size_t>(FactorFamily::kGinsPrior)].size(), 9u);
  EXPECT_FALSE(g.families[static_cast<std::size_t>(FactorFamily::kMatchGins)].empty());
  EXPECT_FALSE(g.families[static_cast<std::size_t>(FactorFamily::kMatchVlidar)].empty());
}

TEST(JointGraph, ZeroKeyframesIsIncompleteStages) {
  const SimRun& run = sparse_run();
  const KeyframeSet empty = first_keyframes(run.keyframes, 0);
  JointState s = truth_state(run, run.keyframes);
  s.gins.clear();
  s.vl.clear();
  std::vector<std::vector<std::shared_ptr<ScanFrame>>> frames(2);
  try {
    assemble_graph(empty, s, frames);
    FAIL();
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIncompleteStages);
  }
  EXPECT_THROW(joint_optimize(empty, s), CalibError);
}

TEST(JointGraph, NonMatchingResidualsVanishAtTruth) {
  const SimRun& run = sparse_run();
  const JointState s = truth_state(run, run.keyframes);
  const FactorGraph g = assemble_graph(run.keyframes, s, frames_for(run.keyframes, s));
  const FamilyCosts c = family_costs(g, g.problem.values(), RobustKernel{});
  EXPECT_LT(c[FactorFamily::kMotion], 1e-10);
  EXPECT_LT(c[FactorFamily::kGinsPrior], 1e-10);
  // The height observation constrains z tightly and the rest loosely; its
  // z slot is exact at the truth.
  EXPECT_LT(std::abs(height_residual(s.t_vl_g, HeightObservation{})[5]), 1e-10);
}

TEST(JointGraph, CostDecomposesIntoFamilies) {
  const SimRun& run = sparse_run();
  JointState s = truth_state(run, run.keyframes);
  std::mt19937_64 rng(4);
  s.t_vl_g = s.t_vl_g * exp_map(testing::random_twist(rng, 0.01, 0.05));
  const FactorGraph g = assemble_graph(run.keyframes, s, frames_for(run.keyframes, s));
  for (const RobustKernel& kernel : {RobustKernel{}, RobustKernel{0.5}}) {
    const double total = g.problem.total_cost(kernel);
    const double sum = family_costs(g, g.problem.values(), kernel).total();
    EXPECT_NEAR(sum, total, 1e-12 * std::max(1.0, total));
  }
}

TEST(JointGraph, HeightFactorRemovesTheFlatDirection) {
  const SimRun& run = sparse_run();
  const JointState s = truth_state(run, run.keyframes);
  const auto frames = frames_for(run.keyframes, s);
  auto cost_change = [&](bool height, double dz) {
    JointOptions opt;
    opt.use_height = height;
    JointState moved = s;
    moved.t_vl_g = RigidTransform::from_translation(0, 0, dz) * s.t_vl_g;
    const FactorGraph base = assemble_graph(run.keyframes, s, frames, opt);
    const FactorGraph shifted = assemble_graph(run.keyframes, moved, frames, opt);
    const double c0 = base.problem.total_cost(opt.lm.kernel);
    return std::make_pair(std::abs(shifted.problem.total_cost(opt.lm.kernel) - c0), c0);
  };
  for (double dz : {-0.2, 0.2}) {
    const auto [flat, c0] = cost_change(false, dz);
    EXPECT_LT(flat, 0.01 * c0) << dz;
    const auto [steep, c1] = cost_change(true, dz);
    EXPECT_GT(steep, 100.0 * flat) << dz;
    EXPECT_GT(steep, 1.0) << dz;
  }
}

TEST(JointOptimize, TruthIsNearlyStationary) {
  const SimRun& run = sparse_run();
  const JointState s = truth_state(run, run.keyframes);
  const JointResult r = joint_optimize(run.keyframes, s);
  const auto est = r.state.sensor_extrinsics();
  for (std::size_t m = 0; m < est.size(); ++m) {
    const ExtrinsicError e = extrinsic_error(est[m], run.t_g_l[m]);
    EXPECT_LT(e.rot_deg, 0.005) << m;
    EXPECT_LT(e.trans_m, 1e-3) << m;
  }
  EXPECT_LE(r.final_costs.total(), r.initial_costs.total());
}

TEST(JointOptimize, HeightFactorRecoversInjectedZ) {
  const SimRun& run = sparse_run();
  JointState s = truth_state(run, run.keyframes);
  const double true_z = s.t_vl_g.translation().z();
  s.t_vl_g = RigidTransform::from_translation(0, 0, 0.3) * s.t_vl_g;
  JointOptions opt;
  opt.rounds = 1;
  const JointResult with = joint_optimize(run.keyframes, s, opt);
  EXPECT_LT(std::abs(with.state.t_vl_g.translation().z() - true_z), 0.05);
  opt.use_height = false;
  const JointResult without = joint_optimize(run.keyframes, s, opt);
  EXPECT_GT(std::abs(without.state.t_vl_g.translation().z() - true_z), 0.2);
}

TEST(JointOptimize, RefinesNoisyGinsPoses) {
  const SimRun& run = sparse_run();
  KeyframeSet noisy = run.keyframes;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t k = 1; k < noisy.size(); ++k) {
    Twist6 xi;
    for (int i = 0; i < 3; ++i) xi[i] = deg2rad(0.05) * n(rng);
    for (int i = 3; i < 6; ++i) xi[i] = 0.02 * n(rng);
    const RigidTransform e = exp_map(xi);
    noisy.gins[k] = noisy.gins[k] * e;
    noisy.gins_start[k] = noisy.gins_start[k] * e;
  }
  JointState s = truth_state(run, run.keyframes);
  s.gins = noisy.gins;
  auto rmse = [&](const std::vector<RigidTransform>& poses) {
    double sum = 0.0;
    for (std::size_t k = 1; k < poses.size(); ++k) {
      sum += (poses[k].translation() - run.gins_gt[k].translation()).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(poses.size() - 1));
  };
  const JointResult r = joint_optimize(noisy, s);
  const double before = rmse(noisy.gins);
  const double after = rmse(r.state.gins);
  EXPECT_LT(after, 0.8 * before) << before << " -> " << after;
}

TEST(JointOptimize, InvariantToUniformTimeShift) {
  const SimRun& run = sparse_run();
  JointState s = truth_state(run, run.keyframes);
  s.t_vl_g = s.t_vl_g * exp_map((Twist6() << 0.002, -0.001, 0.003, 0.01, -0.02, 0.0).finished());
  JointOptions opt;
  opt.rounds = 1;
  KeyframeSet shifted = run.keyframes;
  for (double& t : shifted.stamps) t += 1234.5;
  for (auto& clouds : shifted.raw) {
    for (PointCloud& c : clouds) c.timestamp += 1234.5;
  }
  const JointResult a = joint_optimize(run.keyframes, s, opt);
  const JointResult b = joint_optimize(shifted, s, opt);
  EXPECT_EQ(extrinsic_error(a.state.t_vl_g, b.state.t_vl_g).trans_m, 0.0);
  EXPECT_EQ(extrinsic_error(a.state.l0_lm[1], b.state.l0_lm[1]).rot_deg, 0.0);
}

// --- composition ------------------------------------------------------------

Eigen::Matrix4d mat(const RigidTransform& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = t.rotation().toRotationMatrix();
  m.topRightCorner<3, 1>() = t.translation();
  return m;
}

TEST(Compose, IdentitiesStayIdentities) {
  const auto out = compose_final_extrinsics({}, {}, {RigidTransform(), RigidTransform()});
  for (const RigidTransform& t : out) EXPECT_LT(log_map(t).norm(), 1e-15);
}

TEST(Compose, HeightExampleAgainstMatrixProduct) {
  const RigidTransform vl_l0 = RigidTransform::from_translation(0, 0, -1.5);
  const RigidTransform vl_g = RigidTransform::from_translation(0, 0, 1.8);
  const auto out = compose_final_extrinsics(vl_g, vl_l0, {RigidTransform()});
  const Eigen::Matrix4d oracle = (mat(vl_l0).inverse() * mat(vl_g)).inverse();
  EXPECT_LT((mat(out[0]) - oracle).norm(), 1e-12);
}

TEST(Compose, RoundTripThroughVlidarMatchesDirectChains) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform g_l0 = testing::random_transform(rng);
    const RigidTransform vl_l0 = testing::random_transform(rng);
    const std::vector<RigidTransform> l0_lm = {RigidTransform(), testing::random_transform(rng),
                                               testing::random_transform(rng)};
    const RigidTransform vl_g = vl_l0 * g_l0.inverse();
    const auto out = compose_final_extrinsics(vl_g, vl_l0, l0_lm);
    for (std::size_t m = 0; m < l0_lm.size(); ++m) {
      const Eigen::Matrix4d direct = mat(g_l0) * mat(l0_lm[m]);
      EXPECT_LT((mat(out[m]) - direct).norm(), 1e-12);
    }
  }
}

}  // namespace
}  // namespace lgcalib
