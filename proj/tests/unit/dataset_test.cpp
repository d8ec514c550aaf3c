#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "lgcalib/dataset.hpp"
#include "lgcalib/error.hpp"
#include "lgcalib/keyframes.hpp"
#include "lgcalib/simgen.hpp"
#include "sim_fixture.hpp"
#include "test_util.hpp"

namespace lgcalib {
namespace {

namespace fs = std::filesystem;
using testing::random_transform;
using testing::scratch_dir;

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

TEST(PoseFile, RoundTripAndComments) {
  std::mt19937_64 rng(3);
  std::vector<TimedPose> poses;
  for (int i = 0; i < 50; ++i) poses.push_back({0.1 * i, random_transform(rng)});
  const fs::path p = scratch_dir("pose_file") / "poses.txt";
  write_pose_file(p, poses);
  const auto back = read_pose_file(p);
  ASSERT_EQ(back.size(), poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    EXPECT_NEAR(back[i].time, poses[i].time, 1e-9);
    EXPECT_LT((back[i].pose.translation() - poses[i].pose.translation()).norm(), 1e-12);
    EXPECT_LT(back[i].pose.rotation().angularDistance(poses[i].pose.rotation()), 1e-12);
  }

  write_text(p, "# header\n\n1.0 1 2 3 0 0 0 2\n");
  const auto c = read_pose_file(p);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0].pose.rotation().w(), 1.0);  // normalized on read
  EXPECT_EQ(c[0].pose.translation(), Vector3(1, 2, 3));
}

TEST(PoseFile, MalformedLineIsDatasetError) {
  const fs::path p = scratch_dir("pose_file") / "bad.txt";
  write_text(p, "1.0 1 2 3 0 0\n");
  try {
    read_pose_file(p);
    FAIL();
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDatasetError);
    EXPECT_NE(std::string(e.what()).find("bad.txt"), std::string::npos);
  }
}

TEST(Sensors, RoundTrip) {
  const fs::path p = scratch_dir("sensors") / "sensors.txt";
  write_sensors(p, {{"L0", true, "spinning 16x900"}, {"L1", false, "rosette 70deg"}});
  const auto s = read_sensors(p);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].id, "L0");
  EXPECT_TRUE(s[0].base);
  EXPECT_EQ(s[0].model, "spinning 16x900");
  EXPECT_FALSE(s[1].base);
}

TEST(Extrinsics, RoundTripAndLookup) {
  std::mt19937_64 rng(4);
  const NamedTransforms ext = {{"L0", random_transform(rng)}, {"L1", random_transform(rng)}};
  const fs::path p = scratch_dir("extrinsics") / "ext.txt";
  write_extrinsics(p, ext);
  const auto back = read_extrinsics(p);
  ASSERT_EQ(back.size(), 2u);
  const auto l1 = find_transform(back, "L1");
  ASSERT_TRUE(l1);
  EXPECT_LT(extrinsic_error(*l1, ext[1].second).trans_m, 1e-12);
  EXPECT_FALSE(find_transform(back, "L7"));
}

TEST(KeyValues, CommentsAndWhitespace) {
  const fs::path p = scratch_dir("kv") / "c.cfg";
  write_text(p, "# comment\n  gate_dist_m = 1.5   # trailing\n\nname=abc\n");
  const auto kv = read_key_values(p);
  EXPECT_EQ(kv.at("gate_dist_m"), "1.5");
  EXPECT_EQ(kv.at("name"), "abc");
  EXPECT_EQ(kv.size(), 2u);
}

sim::SimConfig tiny_config() {
  sim::SimConfig c = sim::two_sensor_config(5);
  c.duration_s = 6.0;
  return c;
}

TEST(Dataset, LoadsSimulatedDirectory) {
  const fs::path dir = scratch_dir("load") / "ds";
  fs::remove_all(dir);
  const auto c = tiny_config();
  sim::write_dataset(sim::default_world(c.amplitude_a_m, c.amplitude_b_m), c, dir);
  const Dataset ds = load_dataset(dir);
  EXPECT_EQ(ds.base_sensor().id, "L0");
  EXPECT_EQ(ds.sensors.size(), 2u);
  EXPECT_TRUE(ds.ground_truth);
  EXPECT_TRUE(ds.gins_ground_truth);
  EXPECT_EQ(ds.scans.at("L0").size(), 12u);
  EXPECT_EQ(ds.meta.at("seed"), "5");
  const ScanFile& f = find_scan(ds, "L1", ds.scans.at("L1")[3].stamp + 2e-4);
  EXPECT_EQ(f.path, ds.scans.at("L1")[3].path);
  EXPECT_THROW(find_scan(ds, "L1", 100.0), CalibError);
}

TEST(Dataset, MissingGinsFileNamesTheFile) {
  const fs::path dir = scratch_dir("missing") / "ds";
  fs::remove_all(dir);
  const auto c = tiny_config();
  sim::write_dataset(sim::default_world(c.amplitude_a_m, c.amplitude_b_m), c, dir);
  fs::remove(dir / "gins_poses.txt");
  try {
    load_dataset(dir);
    FAIL();
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDatasetError);
    EXPECT_NE(std::string(e.what()).find("gins_poses.txt"), std::string::npos);
  }
}

TEST(Dataset, NotADirectory) {
  try {
    load_dataset(scratch_dir("missing") / "nowhere");
    FAIL();
  } catch (const CalibError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDatasetError);
  }
}

TEST(Keyframes, EverySensorContributesPerStamp) {
  const fs::path dir = scratch_dir("keyframes") / "ds";
  fs::remove_all(dir);
  const auto c = tiny_config();
  sim::write_dataset(sim::default_world(c.amplitude_a_m, c.amplitude_b_m), c, dir);
  const KeyframeSet kf = load_keyframes(load_dataset(dir), {});
  ASSERT_GE(kf.size(), 2u);
  ASSERT_EQ(kf.raw.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) EXPECT_EQ(kf.raw[s].size(), kf.size());
  for (std::size_t k = 1; k < kf.size(); ++k) {
    EXPECT_GT(kf.stamps[k], kf.stamps[k - 1]);
    const RigidTransform rel = kf.gins[k - 1].inverse() * kf.gins[k];
    const double moved = rel.translation().norm();
    const double turned = rad2deg(log_map(rel).head<3>().norm());
    EXPECT_TRUE(moved >= 2.0 || turned >= 30.0) << k;
  }
}

}  // namespace
}  // namespace lgcalib
