#pragma once

#include <cstddef>
#include <vector>

#include "lgcalib/keyframes.hpp"
#include "lgcalib/solver.hpp"
#include "lgcalib/trajectory.hpp"

namespace lgcalib {

/// World poses W_L0 of the base LiDAR, one per keyframe.
struct BasePoseSet {
  std::vector<double> stamps;
  std::vector<RigidTransform> poses;

  std::size_t size() const { return poses.size(); }
};

/// W_L0(t) = W_G(t) * T_G_L0 for every stamp. Throws kOutOfRange when the
/// trajectory does not cover a stamp.
BasePoseSet init_base_poses(const Trajectory& gins, const std::vector<double>& stamps,
                            const RigidTransform& t_g_l0);

struct MultiLidarOptions {
  FrameOptions frames;
  MatchingOptions matching;
  LmOptions lm = [] {
    LmOptions o;
    o.max_condition = 1e12;
    return o;
  }();
  int rounds = 5;
  double converged_trans_m = 1e-4;
  double converged_rot_deg = 0.01;
  double redeskew_trans_m = 0.01;
  double redeskew_rot_deg = 0.1;
  /// Match frames of different sensors. Off leaves only same-sensor terms.
  bool cross_sensor = true;
};

struct MultiLidarResult {
  std::vector<RigidTransform> extrinsics;  // T_L0_Lm per sensor, identity for the base
  BasePoseSet base_poses;
  SolverReport report;  // last round
  int rounds = 0;
  std::size_t correspondences = 0;
};

/// Jointly refines the base poses (first one held fixed) and T_L0_Lm of every
/// non-base sensor. t_g_l0 places the sensors inside the GINS frame for
/// deskewing only.
MultiLidarResult calibrate_multi_lidar(const KeyframeSet& keyframes, const BasePoseSet& initial_poses,
                                       const std::vector<RigidTransform>& initial_extrinsics,
                                       const RigidTransform& t_g_l0, const MultiLidarOptions& options = {});

}  // namespace lgcalib
