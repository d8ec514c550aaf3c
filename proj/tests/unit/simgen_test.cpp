#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "lgcalib/dataset.hpp"
#include "lgcalib/simgen.hpp"
#include "sim_fixture.hpp"

namespace lgcalib {
namespace {

namespace fs = std::filesystem;
using namespace sim;

TEST(Trajectory, StartsAtOriginAtGinsHeight) {
  const SimConfig c = two_sensor_config();
  const RigidTransform p = trajectory_pose(c, 0.0);
  EXPECT_LT((p.translation() - Vector3(0, 0, c.h_g_m)).norm(), 1e-15);
}

TEST(Trajectory, PlanarWithoutRipple) {
  const SimConfig c = two_sensor_config();
  const Trajectory t = generate_trajectory(c);
  for (const TimedPose& p : t.poses()) {
    EXPECT_EQ(p.pose.translation().z(), c.h_g_m);
    // Heading only: the body z axis stays vertical.
    EXPECT_LT((p.pose.rotation() * Vector3::UnitZ() - Vector3::UnitZ()).norm(), 1e-12);
  }
}

TEST(Trajectory, HeadingIsTangent) {
  const SimConfig c = two_sensor_config();
  for (double t = 0.3; t < c.duration_s; t += 1.1) {
    const Vector3 v = trajectory_pose(c, t + 1e-5).translation() - trajectory_pose(c, t - 1e-5).translation();
    const Vector3 x = trajectory_pose(c, t).rotation() * Vector3::UnitX();
    EXPECT_GT(x.dot(v.normalized()), 1.0 - 1e-6) << t;
  }
}

TEST(Trajectory, FigureEightSelfIntersects) {
  const SimConfig c = two_sensor_config();
  const Trajectory t = generate_trajectory(c);
  const std::size_t half = t.size() / 2;
  double best = 1e9;
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t j = half; j < t.size(); ++j) {
      best = std::min(best, (t[i].pose.translation() - t[j].pose.translation()).norm());
    }
  }
  EXPECT_LT(best, 0.1 * c.amplitude_a_m);
}

TEST(Trajectory, RippleTiltsTheBody) {
  SimConfig c = two_sensor_config();
  c.ripple_deg = 0.5;
  double max_tilt = 0.0;
  for (const TimedPose& p : generate_trajectory(c).poses()) {
    const double cosang = (p.pose.rotation() * Vector3::UnitZ()).z();
    max_tilt = std::max(max_tilt, rad2deg(std::acos(std::min(1.0, cosang))));
  }
  EXPECT_GT(max_tilt, 0.3);
  EXPECT_LT(max_tilt, 0.8);
}

TEST(Raycast, DownLookingRayOverFlatGround) {
  const World flat;
  for (double inc_deg : {0.0, 10.0, 35.0, 60.0}) {
    const double inc = deg2rad(inc_deg);
    const Vector3 dir(std::sin(inc), 0.0, -std::cos(inc));
    const auto r = flat.cast(Vector3(0, 0, 2), dir, 100.0);
    ASSERT_TRUE(r);
    EXPECT_NEAR(*r, 2.0 / std::cos(inc), 1e-12);
  }
  EXPECT_FALSE(flat.cast(Vector3(0, 0, 2), Vector3(1, 0, 0), 100.0));
  EXPECT_FALSE(flat.cast(Vector3(0, 0, 2), Vector3(0.6, 0, -0.8).normalized(), 2.0));
}

TEST(Raycast, BoxSilhouetteLiesOnFaces) {
  World w;
  w.boxes.push_back({Vector3(6, -2, 0), Vector3(8, 2, 3)});
  const RigidTransform pose = RigidTransform::from_translation(0, 0, 1.5);
  const PointCloud cloud = simulate_scan(w, spinning_lidar(), pose, 1);
  std::size_t on_box = 0;
  for (const Vector3& p : cloud.points) {
    const Vector3 wp = pose * p;
    EXPECT_LT(w.surface_residual(wp), 1e-9);
    if (w.on_obstacle(wp, 1e-9)) {
      ++on_box;
      // Seen from the origin side, only the near face at x = 6 is visible.
      EXPECT_NEAR(wp.x(), 6.0, 1e-9);
    }
  }
  EXPECT_GT(on_box, 50u);
}

TEST(Raycast, SolidStateStaysInsideItsCone) {
  const LidarModel m = rosette_lidar(80.0);
  const PointCloud cloud =
      simulate_scan(default_world(10, 14), m, RigidTransform::from_translation(0, 0, 2.5), 2);
  ASSERT_GT(cloud.points.size(), 100u);
  EXPECT_TRUE(cloud.per_point_time.empty());
  for (const Vector3& p : cloud.points) {
    EXPECT_LE(rad2deg(std::acos(p.normalized().x())), 40.0 + 1e-9);
  }
}

TEST(Raycast, SpinningScanCarriesTimes) {
  const SimConfig c = two_sensor_config();
  const RigidTransform end = trajectory_pose(c, 5.0) * c.sensors[0].t_g_l;
  const RigidTransform start = trajectory_pose(c, 4.9) * c.sensors[0].t_g_l;
  const PointCloud cloud = simulate_scan(default_world(10, 14), c.sensors[0].model, start, end, 0.1, 3);
  ASSERT_EQ(cloud.per_point_time.size(), cloud.points.size());
  for (double t : cloud.per_point_time) {
    EXPECT_GE(t, -0.1);
    EXPECT_LE(t, 0.0);
  }
}

TEST(Raycast, ZeroNoisePointsLieOnWorldSurfaces) {
  const SimConfig c = two_sensor_config();
  const World w = default_world(c.amplitude_a_m, c.amplitude_b_m);
  for (double t : {0.0, 7.3, 18.1}) {
    for (const SensorSpec& s : c.sensors) {
      const RigidTransform pose = trajectory_pose(c, t) * s.t_g_l;
      const PointCloud cloud = simulate_scan(w, s.model, pose, 1);
      ASSERT_GT(cloud.points.size(), 1000u);
      double worst = 0.0;
      for (const Vector3& p : cloud.points) worst = std::max(worst, w.surface_residual(pose * p));
      EXPECT_LT(worst, 1e-9) << s.id << " t=" << t;
    }
  }
}

TEST(Raycast, RangeNoiseHasRequestedSigma) {
  World flat;
  LidarModel m = spinning_lidar();
  m.range_noise_m = 0.02;
  const RigidTransform pose = RigidTransform::from_translation(0, 0, 2.0);
  const PointCloud cloud = simulate_scan(flat, m, pose, 11);
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (const Vector3& p : cloud.points) {
    const double range = p.norm();
    const double true_range = 2.0 / (-p.normalized().z());
    sum += range - true_range;
    sum2 += (range - true_range) * (range - true_range);
    ++n;
  }
  ASSERT_GT(n, 1000u);
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 5.0 * 0.02 / std::sqrt(static_cast<double>(n)));
  EXPECT_NEAR(std::sqrt(sum2 / n - mean * mean), 0.02, 0.002);
}

TEST(Rig, TwoSensorFieldsOfViewDoNotOverlap) {
  const SimConfig c = two_sensor_config();
  const LidarModel& spin = c.sensors[0].model;
  const Matrix3 r0 = c.sensors[0].t_g_l.rotation().toRotationMatrix();
  const Matrix3 r1 = c.sensors[1].t_g_l.rotation().toRotationMatrix();
  for (const Vector3& d : c.sensors[1].model.directions()) {
    const Vector3 in0 = r0.transpose() * r1 * d;
    const double az = rad2deg(std::atan2(in0.y(), in0.x()));
    const double el = rad2deg(std::asin(std::clamp(in0.z(), -1.0, 1.0)));
    const bool inside = std::abs(az) <= 0.5 * spin.horizontal_fov_deg && std::abs(el) <= 0.5 * spin.vertical_fov_deg;
    ASSERT_FALSE(inside) << "az " << az << " el " << el;
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void expect_identical_trees(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file() ? 1 : 0;
  ASSERT_EQ(files.size(), count_b);
  for (const fs::path& f : files) {
    ASSERT_TRUE(fs::exists(b / f)) << f;
    ASSERT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

SimConfig short_noisy_config(std::uint64_t seed) {
  SimConfig c = two_sensor_config(seed);
  c.duration_s = 5.0;
  set_noise(c, 0.02, 0.03, 0.1);
  return c;
}

TEST(Dataset, SameSeedGivesIdenticalTreesAcrossThreadCounts) {
  const fs::path root = testing::scratch_dir("determinism");
  fs::remove_all(root);
  const SimConfig c = short_noisy_config(7);
  const World w = default_world(c.amplitude_a_m, c.amplitude_b_m);
  write_dataset(w, c, root / "a", 1);
  write_dataset(w, c, root / "b", 1);
  write_dataset(w, c, root / "c", 3);
  expect_identical_trees(root / "a", root / "b");
  expect_identical_trees(root / "a", root / "c");

  write_dataset(w, short_noisy_config(8), root / "d", 1);
  EXPECT_NE(slurp(root / "a" / "gins_poses.txt"), slurp(root / "d" / "gins_poses.txt"));
}

TEST(Dataset, ZeroNoiseGinsEqualsTruth) {
  const fs::path dir = testing::scratch_dir("zero_noise_gins") / "ds";
  fs::remove_all(dir);
  SimConfig c = two_sensor_config(2);
  c.duration_s = 4.0;
  write_dataset(default_world(c.amplitude_a_m, c.amplitude_b_m), c, dir);
  EXPECT_EQ(slurp(dir / "gins_poses.txt"), slurp(dir / "gins_poses_gt.txt"));
  const Dataset ds = load_dataset(dir);
  ASSERT_TRUE(ds.ground_truth);
  EXPECT_LT(extrinsic_error(*find_transform(*ds.ground_truth, "L1"), c.sensors[1].t_g_l).trans_m, 1e-12);
}

TEST(Dataset, GinsNoiseIsCorrelatedWithRequestedScale) {
  SimConfig c = two_sensor_config(4);
  c.duration_s = 400.0;
  set_noise(c, 0.0, 0.03, 0.1);
  const Trajectory truth = generate_trajectory(c);
  const Trajectory meas = gins_measurements(c, truth);
  double sum2 = 0.0, lag1 = 0.0;
  std::vector<double> ex;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ex.push_back(meas[i].pose.translation().x() - truth[i].pose.translation().x());
  }
  for (std::size_t i = 0; i < ex.size(); ++i) {
    sum2 += ex[i] * ex[i];
    if (i > 0) lag1 += ex[i] * ex[i - 1];
  }
  const double sigma = std::sqrt(sum2 / ex.size());
  EXPECT_NEAR(sigma, 0.03, 0.012);
  EXPECT_GT(lag1 / sum2, 0.9);  // 0.1 s steps against a 5 s correlation time
}

}  // namespace
}  // namespace lgcalib
