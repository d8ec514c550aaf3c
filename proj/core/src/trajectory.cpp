#include "lgcalib/trajectory.hpp"

#include <algorithm>

#include "lgcalib/error.hpp"

namespace lgcalib {

Trajectory::Trajectory(std::vector<TimedPose> poses) : poses_(std::move(poses)) {
  if (poses_.empty()) throw CalibError(ErrorCode::kEmptyTrajectory, "trajectory has no poses");
  for (std::size_t i = 1; i < poses_.size(); ++i) {
    if (!(poses_[i].time > poses_[i - 1].time)) {
      throw CalibError(ErrorCode::kOutOfRange,
                       "trajectory times must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

RigidTransform Trajectory::pose_at(double t) const {
  if (!covers(t)) {
    throw CalibError(ErrorCode::kOutOfRange, "time " + std::to_string(t) + " outside trajectory [" +
                                                 std::to_string(empty() ? 0.0 : start_time()) + ", " +
                                                 std::to_string(empty() ? 0.0 : end_time()) + "]");
  }
  auto it = std::lower_bound(poses_.begin(), poses_.end(), t,
                             [](const TimedPose& p, double value) { return p.time < value; });
  if (it->time == t) return it->pose;
  return interpolate_pose(*(it - 1), *it, t);
}

KeyframeIndex select_keyframes(const Trajectory& trajectory, double dist_thresh_m,
                               double angle_thresh_deg) {
  if (trajectory.empty()) throw CalibError(ErrorCode::kEmptyTrajectory, "trajectory has no poses");
  KeyframeIndex out;
  out.dist_thresh_m = dist_thresh_m;
  out.angle_thresh_deg = angle_thresh_deg;
  const double angle_thresh = deg2rad(angle_thresh_deg);
  std::size_t last = 0;
  out.indices.push_back(0);
  out.timestamps.push_back(trajectory[0].time);
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const RigidTransform rel = trajectory[last].pose.inverse() * trajectory[i].pose;
    if (rel.translation().norm() >= dist_thresh_m || rel.angle() >= angle_thresh) {
      out.indices.push_back(i);
      out.timestamps.push_back(trajectory[i].time);
      last = i;
    }
  }
  return out;
}

}  // namespace lgcalib
