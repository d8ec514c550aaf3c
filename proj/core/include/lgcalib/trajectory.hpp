#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lgcalib/se3.hpp"

namespace lgcalib {

/// Time-sorted sequence of poses. Queries between samples interpolate
/// geodesically; queries outside [front, back] throw kOutOfRange.
class Trajectory {
 public:
  Trajectory() = default;
  /// Throws kEmptyTrajectory on empty input and kOutOfRange when times are
  /// not strictly increasing.
  explicit Trajectory(std::vector<TimedPose> poses);

  const std::vector<TimedPose>& poses() const { return poses_; }
  std::size_t size() const { return poses_.size(); }
  bool empty() const { return poses_.empty(); }
  const TimedPose& operator[](std::size_t i) const { return poses_[i]; }

  double start_time() const { return poses_.front().time; }
  double end_time() const { return poses_.back().time; }
  bool covers(double t) const { return !empty() && t >= start_time() && t <= end_time(); }

  RigidTransform pose_at(double t) const;

 private:
  std::vector<TimedPose> poses_;
};

struct KeyframeIndex {
  /// Indices into the trajectory the keyframes were selected from.
  std::vector<std::size_t> indices;
  std::vector<double> timestamps;
  double dist_thresh_m = 2.0;
  double angle_thresh_deg = 30.0;

  std::size_t size() const { return indices.size(); }
};

/// Greedy selection: the first pose is a keyframe; a later pose becomes one
/// once its translation from the previous keyframe reaches dist_thresh or its
/// relative rotation reaches angle_thresh.
KeyframeIndex select_keyframes(const Trajectory& trajectory, double dist_thresh_m,
                               double angle_thresh_deg);

}  // namespace lgcalib
