#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgcalib/dataset.hpp"
#include "lgcalib/joint.hpp"
#include "lgcalib/keyframes.hpp"
#include "lgcalib/metrics.hpp"

namespace lgcalib {

struct PipelineConfig {
  std::string dataset;
  std::string output_dir = "calib_out";
  std::string initial_extrinsics;  // used when stage_init is off

  double keyframe_dist_m = 2.0;
  double keyframe_angle_deg = 30.0;
  double scan_period_s = 0.1;

  int cov_neighbors = 20;
  double cov_epsilon = 1e-3;
  double voxel_leaf_m = 0.3;
  double gate_dist_m = 1.0;
  int max_corr_per_pair = 2000;
  double pair_radius_m = 15.0;
  double huber_delta = 0.1;
  int lm_max_iterations = 100;

  int direct_iterations = 200;
  int direct_max_evals = 800;
  double init_voxel_leaf_m = 1.0;
  double init_gate_m = 2.0;
  int init_query_points = 600;
  double init_max_tilt_deg = 30.0;

  int lg_rounds = 5;
  double lg_vertical_sigma_m = 0.01;
  int ml_rounds = 5;
  int joint_rounds = 3;

  int ransac_iterations = 500;
  double ransac_inlier_m = 0.05;
  double ransac_min_ratio = 0.2;
  double max_ground_tilt_deg = 30.0;
  double ground_band_m = 2.0;
  double patch_radius_m = 10.0;

  double h_g_m = 1.8;
  double height_cb = 1e8;
  double height_cs = 1e-3;
  double gins_prior_rot_deg = 0.2;
  double gins_prior_trans_m = 0.05;
  double motion_rot_deg = 0.001;
  double motion_trans_m = 0.0002;

  double metric_radius_m = 1.0;
  int metric_max_points = 20000;

  bool stage_init = true;
  bool stage_lidar_gins = true;
  bool stage_ground_align = true;
  bool stage_multi_lidar = true;
  bool stage_terrain = true;
  bool stage_joint = true;
  bool use_height_factor = true;
  bool use_motion_factor = true;
  bool compute_metrics = true;

  int threads = 1;
  std::int64_t seed = 7;
  /// Added to the z of T_VL_G before the joint stage (observability tests).
  double inject_vl_g_z_m = 0.0;

  /// Throws kConfigError on a non-positive threshold or missing dataset.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string unit;
  std::string help;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

/// Every configuration key in declaration order.
const std::vector<ConfigKey>& config_keys();

/// Throws kConfigError for unknown keys or unparsable values.
void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value);
PipelineConfig load_config(const std::string& path);
void apply_config_file(PipelineConfig& config, const std::string& path);

/// Key/value lines of the effective configuration.
std::vector<std::pair<std::string, std::string>> config_echo(const PipelineConfig& config);

struct StageRecord {
  std::string name;
  bool ran = false;
  double seconds = 0.0;
  NamedTransforms extrinsics;
  std::optional<SolverReport> solver;
  std::vector<std::pair<std::string, double>> values;
};

struct SensorError {
  std::string id;
  ExtrinsicError gins;                 // T_G_Lm
  std::optional<ExtrinsicError> base;  // T_L0_Lm, non-base sensors
};

struct CalibrationReport {
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> sensor_ids;
  std::size_t base = 0;
  std::size_t keyframes = 0;
  std::vector<StageRecord> stages;

  std::vector<RigidTransform> extrinsics;  // T_G_Lm after the last stage that ran
  std::vector<RigidTransform> l0_lm;       // T_L0_Lm
  std::optional<RigidTransform> t_vl_g;
  std::optional<RigidTransform> t_vl_l0;
  std::optional<FamilyCosts> joint_costs;

  std::optional<MapMetrics> metrics_initial;
  std::optional<MapMetrics> metrics_final;
  std::vector<SensorError> errors;
  double total_seconds = 0.0;

  const StageRecord* stage(const std::string& name) const;
  /// Ordered machine-readable lines. Keys starting with "time." carry wall
  /// clock and are excluded from reproducibility checks.
  std::vector<std::pair<std::string, std::string>> key_values() const;
  std::string text() const;
};

/// Formats with 9 significant digits.
std::string format_number(double v);

/// Points of keyframe k of a sensor, deskewed with t_g_l and voxel filtered.
std::vector<Vector3> deskewed_points(const KeyframeSet& keyframes, std::size_t sensor, std::size_t keyframe,
                                     const RigidTransform& t_g_l, double voxel_leaf_m);

/// Every keyframe of every sensor placed in the world through the GINS poses
/// and T_G_Lm.
std::vector<Vector3> stitch_map(const KeyframeSet& keyframes, const std::vector<RigidTransform>& gins,
                                const std::vector<RigidTransform>& extrinsics, double voxel_leaf_m);

/// Runs the enabled stages in order. Stage failures are rethrown with the
/// stage name prefixed and the original error code.
CalibrationReport run_pipeline(const PipelineConfig& config);

/// Writes report.txt, report.kv and extrinsics.txt into the directory.
void write_report(const CalibrationReport& report, const std::string& dir);

}  // namespace lgcalib
