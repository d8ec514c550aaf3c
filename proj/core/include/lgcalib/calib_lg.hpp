#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lgcalib/dataset.hpp"
#include "lgcalib/direct.hpp"
#include "lgcalib/keyframes.hpp"
#include "lgcalib/solver.hpp"

namespace lgcalib {

/// Sensors, GINS trajectory and the current LiDAR-to-GINS extrinsics T_G_Lm.
struct Rig {
  std::vector<SensorInfo> sensors;
  std::size_t base = 0;
  Trajectory gins;
  std::vector<RigidTransform> extrinsics;
  double h_g_m = 1.8;

  /// Throws kConfigError unless there is exactly one base sensor and one
  /// extrinsic per sensor.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Rotation initialization

struct RotationInitOptions {
  double voxel_leaf_m = 1.0;
  double gate_m = 2.0;
  std::size_t query_points = 600;
  double pair_radius_m = 15.0;
  double max_tilt_deg = 30.0;  // pitch/roll search bound
  int iterations = 200;
  std::size_t max_evaluations = 800;
  double min_yaw_span_deg = 10.0;
  int threads = 1;
};

/// Mean gated nearest-neighbour distance of the map stitched with a
/// rotation-only extrinsic, each point matched against the other frames.
class RotationObjective {
 public:
  RotationObjective(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& gins,
                    const RotationInitOptions& options);

  double operator()(const Eigen::Quaterniond& rotation) const;
  /// Rotation from (yaw, pitch, roll) in radians, R = Rz * Ry * Rx.
  static Eigen::Quaterniond from_ypr(const Vector3& ypr);

 private:
  struct Frame {
    std::vector<Vector3> points;
    KdTree tree;
  };
  std::vector<Frame> frames_;
  std::vector<RigidTransform> gins_;
  std::vector<std::vector<std::size_t>> neighbours_;
  std::vector<std::pair<std::size_t, std::size_t>> queries_;  // (frame, point)
  RotationInitOptions options_;
};

struct RotationInitResult {
  RigidTransform extrinsic;  // zero translation
  double objective = 0.0;
  DirectResult search;
};

/// Throws kInsufficientMotion when the GINS yaw span is below the minimum.
RotationInitResult initialize_rotation(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& gins,
                                       const RotationInitOptions& options = {});

/// Unwrapped yaw range covered by the poses, degrees.
double yaw_span_deg(const std::vector<RigidTransform>& poses);

// ---------------------------------------------------------------------------
// Batch LiDAR-GINS refinement

struct LidarGinsOptions {
  FrameOptions frames;
  MatchingOptions matching;
  LmOptions lm;
  int rounds = 5;
  double converged_trans_m = 1e-4;
  double converged_rot_deg = 0.01;
  /// Re-deskew the frames once the extrinsic moved by more than this.
  double redeskew_trans_m = 0.01;
  double redeskew_rot_deg = 0.1;
  /// A round whose mean per-correspondence cost exceeds the previous one by
  /// this factor counts as divergence.
  double divergence_ratio = 1.05;
  /// Sigma of a prior holding the vertical translation (in {G}) at its
  /// initial value. Planar motion leaves it unobservable here; ground
  /// alignment and the joint stage set it. 0 disables the prior.
  double vertical_prior_sigma_m = 0.01;
};

struct LidarGinsResult {
  RigidTransform extrinsic;
  SolverReport report;  // last round
  int rounds = 0;
  std::vector<double> round_costs;  // mean robust cost per correspondence
  std::size_t correspondences = 0;
};

/// Refines T_G_L of one sensor with the GINS poses held fixed.
LidarGinsResult calibrate_lidar_gins(const KeyframeSet& keyframes, std::size_t sensor,
                                     const RigidTransform& initial, const LidarGinsOptions& options = {});

// ---------------------------------------------------------------------------
// Ground plane and ground alignment

struct GroundPlane {
  PlaneModel plane;
  std::size_t inlier_count = 0;
  double inlier_rms = 0.0;
  std::vector<std::size_t> inliers;  // indices into the input points
};

struct GroundFitOptions {
  int ransac_iterations = 500;
  double inlier_threshold_m = 0.05;
  double min_inlier_ratio = 0.2;
  double max_tilt_deg = 30.0;
  double h_g_m = 1.8;
  double band_half_width_m = 2.0;
  std::size_t min_points = 100;
  std::uint64_t seed = 7;
};

/// Least-squares plane through the points (smallest principal direction),
/// canonicalized.
PlaneModel fit_plane_least_squares(std::span<const Vector3> points);

/// RANSAC ground in frame {G}: only points with z in [-h_G - w, -h_G + w]
/// take part. Throws kNoGroundFound.
GroundPlane fit_ground_plane(std::span<const Vector3> points_in_g, const GroundFitOptions& options = {});

struct GroundAlignResult {
  std::vector<RigidTransform> extrinsics;
  std::vector<double> delta_h;  // per sensor, 0 for the base
  std::vector<GroundPlane> planes;
};

/// clouds_in_g[m] is one cloud of sensor m expressed in {G} with the current
/// extrinsic. Each non-base extrinsic becomes Tz(d_m - d_0) * T_G_Lm.
GroundAlignResult ground_align(const std::vector<RigidTransform>& extrinsics, std::size_t base,
                               const std::vector<std::vector<Vector3>>& clouds_in_g,
                               const GroundFitOptions& options = {});

/// Keyframe whose GINS attitude has the smallest |pitch| + |roll|; ties go to
/// the earliest.
std::size_t flattest_keyframe(const std::vector<RigidTransform>& gins);

}  // namespace lgcalib
