#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lgcalib/se3.hpp"

namespace lgcalib {

/// A single scan. Coordinates are meters in the sensor frame. When present,
/// per_point_time holds seconds relative to `timestamp` (the scan end), so
/// values lie in [-scan_period, 0].
struct PointCloud {
  std::vector<Vector3> points;
  std::vector<double> per_point_time;
  double timestamp = 0.0;
  std::string sensor_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_per_point_time() const { return !per_point_time.empty(); }

  /// Throws CalibError(kParseError) when coordinates are non-finite or the
  /// time channel is malformed (wrong length, decreasing).
  void validate() const;
};

using PointCovariance = Matrix3;

/// Applies `t` to every point; the time channel is carried over.
PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);

struct CovarianceOptions {
  std::size_t k = 20;
  double epsilon = 1e-3;
  bool regularize = true;
  int threads = 1;
};

/// Sample covariance of the k nearest neighbours (self excluded) with
/// eigenvalues optionally replaced by (1, 1, epsilon).
std::vector<PointCovariance> estimate_covariances(const PointCloud& cloud,
                                                  const CovarianceOptions& options = {});

/// Keeps eigenvectors, replaces eigenvalues with (epsilon, 1, 1) ascending.
PointCovariance regularize_covariance(const PointCovariance& cov, double epsilon);

/// Unbiased (n-1) sample covariance of the selected points.
Matrix3 sample_covariance(std::span<const Vector3> points, std::span<const std::size_t> indices);

/// One centroid per occupied voxel of side `leaf`, in order of first
/// occupancy. The time channel is dropped; deskew before downsampling.
PointCloud voxel_downsample(const PointCloud& cloud, double leaf);

/// Re-expresses each point in the scan-end frame. pose_start and pose_end are
/// the sensor poses at relative times -scan_period and 0; intermediate poses
/// are geodesically interpolated. The output has no time channel.
PointCloud motion_compensate(const PointCloud& cloud, const RigidTransform& pose_start,
                             const RigidTransform& pose_end, double scan_period);

}  // namespace lgcalib
