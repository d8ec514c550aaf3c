#include "lgcalib/terrain.hpp"

#include <cmath>
#include <string>

#include "lgcalib/error.hpp"

namespace lgcalib {

PointCloud extract_ground_map(const BasePoseSet& poses, const std::vector<std::vector<Vector3>>& base_clouds,
                              const RigidTransform& t_g_l0, const GroundMapOptions& options) {
  if (poses.size() != base_clouds.size()) {
    throw CalibError(ErrorCode::kConfigError, "one base cloud per base pose is required");
  }
  PointCloud map;
  std::size_t with_ground = 0;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    std::vector<Vector3> in_g;
    in_g.reserve(base_clouds[k].size());
    for (const Vector3& p : base_clouds[k]) in_g.push_back(t_g_l0 * p);
    GroundPlane ground;
    try {
      ground = fit_ground_plane(in_g, options.fit);
    } catch (const CalibError& e) {
      if (e.code() != ErrorCode::kNoGroundFound) throw;
      continue;
    }
    ++with_ground;
    for (std::size_t i : ground.inliers) map.points.push_back(poses.poses[k] * base_clouds[k][i]);
  }
  const double needed = options.min_keyframe_ratio * static_cast<double>(poses.size());
  if (poses.size() == 0 || static_cast<double>(with_ground) < needed) {
    throw CalibError(ErrorCode::kNoGroundFound, "ground found in " + std::to_string(with_ground) + " of " +
                                                    std::to_string(poses.size()) + " keyframes");
  }
  return map;
}

double roughness(std::span<const Vector3> points, const PlaneModel& plane) {
  if (points.size() < kMinPatchPoints) {
    throw CalibError(ErrorCode::kTooFewPoints, "roughness needs at least " + std::to_string(kMinPatchPoints) +
                                                   " points, got " + std::to_string(points.size()));
  }
  const auto n = static_cast<double>(points.size());
  double mean = 0.0;
  for (const Vector3& p : points) mean += plane.signed_distance(p);
  mean /= n;
  double var = 0.0;
  for (const Vector3& p : points) {
    const double d = plane.signed_distance(p) - mean;
    var += d * d;
  }
  return std::sqrt(var / n);
}

std::vector<GroundPatch> score_patches(const PointCloud& ground_map, const BasePoseSet& poses, double radius_m) {
  std::vector<GroundPatch> out;
  const double r2 = radius_m * radius_m;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Vector3 origin = poses.poses[k].translation();
    GroundPatch patch;
    patch.radius = radius_m;
    patch.keyframe = k;
    std::vector<Vector3> pts;
    for (std::size_t i = 0; i < ground_map.size(); ++i) {
      const Vector3& p = ground_map.points[i];
      if ((p.head<2>() - origin.head<2>()).squaredNorm() <= r2) {
        patch.points.push_back(i);
        pts.push_back(p);
      }
    }
    if (pts.size() < kMinPatchPoints) continue;
    patch.plane = fit_plane_least_squares(pts);
    patch.roughness = roughness(pts, patch.plane);
    // Ground point below the pose along the vertical.
    const double z = std::abs(patch.plane.normal.z()) > 1e-9
                         ? -(patch.plane.normal.head<2>().dot(origin.head<2>()) + patch.plane.intercept) /
                               patch.plane.normal.z()
                         : origin.z();
    patch.center = Vector3(origin.x(), origin.y(), z);
    out.push_back(std::move(patch));
  }
  return out;
}

GroundPatch select_flattest_patch(const PointCloud& ground_map, const BasePoseSet& poses, double radius_m) {
  std::vector<GroundPatch> patches = score_patches(ground_map, poses, radius_m);
  if (patches.empty()) {
    throw CalibError(ErrorCode::kNoValidPatch, "no ground patch has " + std::to_string(kMinPatchPoints) +
                                                   " points within " + std::to_string(radius_m) + " m");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < patches.size(); ++i) {
    if (patches[i].roughness < patches[best].roughness) best = i;
  }
  return std::move(patches[best]);
}

RigidTransform vlidar_extrinsic(const GroundPatch& patch, const RigidTransform& base_pose) {
  const PlaneModel in_base = patch.plane.pulled_back(base_pose);
  return rotation_between_planes(in_base, PlaneModel{Vector3::UnitZ(), 0.0});
}

}  // namespace lgcalib
