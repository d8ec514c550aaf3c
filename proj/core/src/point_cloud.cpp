#include "lgcalib/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "lgcalib/error.hpp"
#include "lgcalib/kdtree.hpp"
#include "lgcalib/parallel.hpp"

namespace lgcalib {

void PointCloud::validate() const {
  for (const auto& p : points) {
    if (!p.allFinite()) throw CalibError(ErrorCode::kParseError, "non-finite point coordinate");
  }
  if (per_point_time.empty()) return;
  if (per_point_time.size() != points.size()) {
    throw CalibError(ErrorCode::kParseError, "per-point time count does not match point count");
  }
  for (std::size_t i = 0; i < per_point_time.size(); ++i) {
    if (!std::isfinite(per_point_time[i]) || (i > 0 && per_point_time[i] < per_point_time[i - 1])) {
      throw CalibError(ErrorCode::kParseError, "per-point time must be finite and non-decreasing");
    }
  }
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = t * p;
  return out;
}

Matrix3 sample_covariance(std::span<const Vector3> points, std::span<const std::size_t> indices) {
  const auto n = static_cast<double>(indices.size());
  Vector3 mean = Vector3::Zero();
  for (std::size_t i : indices) mean += points[i];
  mean /= n;
  Matrix3 cov = Matrix3::Zero();
  for (std::size_t i : indices) {
    const Vector3 d = points[i] - mean;
    cov.noalias() += d * d.transpose();
  }
  return cov / std::max(1.0, n - 1.0);
}

PointCovariance regularize_covariance(const PointCovariance& cov, double epsilon) {
  Eigen::SelfAdjointEigenSolver<Matrix3> solver(cov);
  const Matrix3& v = solver.eigenvectors();
  const Vector3 values(epsilon, 1.0, 1.0);
  Matrix3 out = v * values.asDiagonal() * v.transpose();
  return 0.5 * (out + out.transpose());
}

std::vector<PointCovariance> estimate_covariances(const PointCloud& cloud,
                                                  const CovarianceOptions& options) {
  const std::size_t n = cloud.size();
  if (n < options.k + 1) {
    throw CalibError(ErrorCode::kTooFewPoints, "covariance estimation needs at least " +
                                                   std::to_string(options.k + 1) + " points, got " +
                                                   std::to_string(n));
  }
  const KdTree tree(cloud.points);
  std::vector<PointCovariance> out(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    std::vector<Neighbor> nn = tree.knn(cloud.points[i], options.k + 1);
    std::vector<std::size_t> idx;
    idx.reserve(options.k);
    for (const auto& nb : nn) {
      if (nb.index != i && idx.size() < options.k) idx.push_back(nb.index);
    }
    const Matrix3 cov = sample_covariance(cloud.points, idx);
    out[i] = options.regularize ? regularize_covariance(cov, options.epsilon) : cov;
  });
  return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double leaf) {
  if (!(leaf > 0.0)) throw CalibError(ErrorCode::kConfigError, "voxel leaf must be positive");
  struct Key {
    std::int64_t x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return static_cast<std::size_t>(k.x * 73856093LL ^ k.y * 19349663LL ^ k.z * 83492791LL);
    }
  };
  struct Accum {
    Vector3 sum = Vector3::Zero();
    std::size_t count = 0;
  };
  std::unordered_map<Key, std::size_t, KeyHash> slot_of;
  std::vector<Accum> slots;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vector3& p = cloud.points[i];
    const Key key{static_cast<std::int64_t>(std::floor(p.x() / leaf)),
                  static_cast<std::int64_t>(std::floor(p.y() / leaf)),
                  static_cast<std::int64_t>(std::floor(p.z() / leaf))};
    auto [it, inserted] = slot_of.try_emplace(key, slots.size());
    if (inserted) slots.emplace_back();
    Accum& a = slots[it->second];
    a.sum += p;
    ++a.count;
  }
  PointCloud out;
  out.timestamp = cloud.timestamp;
  out.sensor_id = cloud.sensor_id;
  out.points.reserve(slots.size());
  for (const auto& a : slots) {
    out.points.push_back(a.sum / static_cast<double>(a.count));
  }
  return out;
}

PointCloud motion_compensate(const PointCloud& cloud, const RigidTransform& pose_start,
                             const RigidTransform& pose_end, double scan_period) {
  if (!cloud.has_per_point_time()) {
    throw CalibError(ErrorCode::kMissingPerPointTime,
                     "cloud of sensor '" + cloud.sensor_id + "' carries no per-point time");
  }
  if (!(scan_period > 0.0)) {
    throw CalibError(ErrorCode::kOutOfRange, "scan period must be positive");
  }
  const TimedPose start{-scan_period, pose_start};
  const TimedPose end{0.0, pose_end};
  const RigidTransform end_inv = pose_end.inverse();
  // Relative motion over the scan, interpolated in the start frame.
  const Twist6 delta = log_map(pose_start.inverse() * pose_end);
  PointCloud out;
  out.timestamp = cloud.timestamp;
  out.sensor_id = cloud.sensor_id;
  out.points.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double t = cloud.per_point_time[i];
    // 1 us slack: PCD stores times as float.
    if (t < start.time - 1e-6 || t > end.time + 1e-6) {
      throw CalibError(ErrorCode::kOutOfRange, "per-point time outside the scan period");
    }
    const double s = std::clamp((t - start.time) / scan_period, 0.0, 1.0);
    const RigidTransform pose_at = pose_start * exp_map(s * delta);
    out.points[i] = end_inv * (pose_at * cloud.points[i]);
  }
  return out;
}

}  // namespace lgcalib
