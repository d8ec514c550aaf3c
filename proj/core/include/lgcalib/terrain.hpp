#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lgcalib/calib_lg.hpp"
#include "lgcalib/calib_ml.hpp"

namespace lgcalib {

struct GroundPatch {
  Vector3 center = Vector3::Zero();  // world, on the ground below the pose
  double radius = 0.0;
  std::vector<std::size_t> points;  // indices into the ground map
  PlaneModel plane;                 // world frame
  double roughness = 0.0;
  std::size_t keyframe = 0;
};

struct GroundMapOptions {
  GroundFitOptions fit;
  /// NoGroundFound when fewer keyframes than this fraction yield ground.
  double min_keyframe_ratio = 0.3;
};

/// Union of per-keyframe ground inliers in the world frame. base_clouds are in
/// the base LiDAR frame; t_g_l0 places them in {G} for the ground search.
PointCloud extract_ground_map(const BasePoseSet& poses, const std::vector<std::vector<Vector3>>& base_clouds,
                              const RigidTransform& t_g_l0, const GroundMapOptions& options = {});

/// Population standard deviation of signed point-to-plane distances. Throws
/// kTooFewPoints below 50 points.
double roughness(std::span<const Vector3> points, const PlaneModel& plane);

inline constexpr std::size_t kMinPatchPoints = 50;

/// Scores the patch around every pose (ground points within `radius_m` of the
/// pose in xy) and returns the one with the lowest roughness, earliest on
/// ties. Throws kNoValidPatch when no patch has enough points.
GroundPatch select_flattest_patch(const PointCloud& ground_map, const BasePoseSet& poses, double radius_m);

/// All patches that have enough points, in keyframe order.
std::vector<GroundPatch> score_patches(const PointCloud& ground_map, const BasePoseSet& poses, double radius_m);

/// T_VL_L0 levelling the patch plane, pulled back into the base frame at the
/// patch keyframe, onto z = 0.
RigidTransform vlidar_extrinsic(const GroundPatch& patch, const RigidTransform& base_pose);

}  // namespace lgcalib
