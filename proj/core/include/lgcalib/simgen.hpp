#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lgcalib/dataset.hpp"
#include "lgcalib/point_cloud.hpp"
#include "lgcalib/trajectory.hpp"

namespace lgcalib::sim {

struct Box {
  Vector3 min_corner = Vector3::Zero();
  Vector3 max_corner = Vector3::Ones();
};

enum class TerrainKind {
  kBumpy,  // short-wavelength ripples inside a disc
  kHill,   // one smooth mound
};

/// Height-field disturbance of the z = 0 ground, zero outside its disc.
struct TerrainPatch {
  TerrainKind kind = TerrainKind::kBumpy;
  double center_x = 0.0;
  double center_y = 0.0;
  double radius_m = 5.0;
  double amplitude_m = 0.1;
  double wavelength_m = 1.0;

  double height(double x, double y) const;
};

struct World {
  std::vector<TerrainPatch> terrain;
  std::vector<Box> boxes;

  double ground_height(double x, double y) const;
  /// Range along the unit direction to the first surface, if within max_range.
  std::optional<double> cast(const Vector3& origin, const Vector3& direction, double max_range) const;
  /// Distance-like residual to the nearest surface: |z - h(x, y)| on the
  /// ground, Euclidean distance to box boundaries; the minimum is returned.
  double surface_residual(const Vector3& p) const;
  bool on_obstacle(const Vector3& p, double tol) const;
};

/// Ground with a bumpy zone and a hill beside the figure-eight, boxes inside
/// and around the loops, and long walls at the edges.
World default_world(double amplitude_a_m, double amplitude_b_m);

enum class LidarKind { kSpinning, kSolidState };

struct LidarModel {
  LidarKind kind = LidarKind::kSpinning;
  double horizontal_fov_deg = 240.0;
  double vertical_fov_deg = 30.0;
  int channels = 16;
  int azimuth_steps = 900;  // per full revolution
  int rosette_points = 8000;
  double max_range_m = 100.0;
  double range_noise_m = 0.0;

  /// Unit ray directions in the sensor frame (x forward) in firing order.
  /// Spinning models fire column by column.
  std::vector<Vector3> directions() const;
  /// Firing column of each direction (spinning) or 0 (solid state).
  std::vector<int> columns() const;
  int column_count() const;
  std::string describe() const;
};

LidarModel spinning_lidar();
LidarModel rosette_lidar(double fov_deg = 70.0);

struct SensorSpec {
  std::string id;
  bool base = false;
  LidarModel model;
  RigidTransform t_g_l;  // ground truth extrinsic
};

struct SimConfig {
  std::uint64_t seed = 1;
  double amplitude_a_m = 16.0;
  double amplitude_b_m = 22.0;
  double duration_s = 40.0;
  double gins_rate_hz = 10.0;
  double scan_rate_hz = 2.0;
  double scan_period_s = 0.1;
  double h_g_m = 1.8;
  double ripple_deg = 0.0;  // pitch/roll vibration amplitude
  double ripple_period_s = 1.7;
  double gins_sigma_pos_m = 0.0;
  double gins_sigma_rot_deg = 0.0;
  double gins_noise_corr_s = 5.0;  // Gauss-Markov correlation time
  std::vector<SensorSpec> sensors;
};

/// L0 spinning facing forward and L1 solid state facing backward; the fields
/// of view do not overlap. Noise-free.
SimConfig two_sensor_config(std::uint64_t seed = 1);
/// Five sensors (two spinning, three solid state) around the vehicle.
SimConfig five_sensor_config(std::uint64_t seed = 1);
/// Sets GINS noise and the range noise of every sensor.
void set_noise(SimConfig& config, double range_sigma_m, double gins_pos_m, double gins_rot_deg);

/// Exact pose of the GINS frame at time t.
RigidTransform trajectory_pose(const SimConfig& config, double t);
/// Samples at the GINS rate over [0, duration].
Trajectory generate_trajectory(const SimConfig& config);
/// Noisy GINS measurements of `truth`, deterministic in config.seed.
Trajectory gins_measurements(const SimConfig& config, const Trajectory& truth);
std::vector<double> scan_times(const SimConfig& config);

/// Scan captured with the sensor at `pose` (static capture, no time channel).
PointCloud simulate_scan(const World& world, const LidarModel& model, const RigidTransform& pose,
                         std::uint64_t noise_seed);
/// Scan of a moving sensor: column c fires at relative time
/// -period + period * c / (columns - 1) from the geodesic interpolation of
/// pose_start (time -period) and pose_end (time 0). Spinning models carry the
/// time channel.
PointCloud simulate_scan(const World& world, const LidarModel& model, const RigidTransform& pose_start,
                         const RigidTransform& pose_end, double period, std::uint64_t noise_seed);

/// Seed of an independent noise stream per (seed, sensor, scan).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t sensor, std::uint64_t scan);

struct DatasetLayout {
  std::filesystem::path root;
  std::size_t scans_per_sensor = 0;
  std::size_t gins_samples = 0;
};

DatasetLayout write_dataset(const World& world, const SimConfig& config, const std::filesystem::path& dir,
                            int threads = 1);

}  // namespace lgcalib::sim
