#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "lgcalib/dataset.hpp"
#include "lgcalib/factors.hpp"
#include "lgcalib/point_cloud.hpp"
#include "lgcalib/trajectory.hpp"

namespace lgcalib {

/// Raw keyframe scans of every sensor plus the GINS measurements needed to
/// place and deskew them.
struct KeyframeSet {
  std::vector<std::string> sensor_ids;
  std::size_t base = 0;
  double scan_period = 0.1;
  std::vector<double> stamps;
  std::vector<RigidTransform> gins;        // W_G at each stamp
  std::vector<RigidTransform> gins_start;  // W_G at stamp - scan_period
  std::vector<std::vector<PointCloud>> raw;  // [sensor][keyframe]

  std::size_t size() const { return stamps.size(); }
  std::size_t sensor_count() const { return sensor_ids.size(); }
};

struct KeyframeOptions {
  double dist_thresh_m = 2.0;
  double angle_thresh_deg = 30.0;
  double scan_period_s = 0.1;
};

/// Keyframes are selected on the GINS trajectory sampled at the base scan
/// stamps; every sensor contributes its scan nearest to each stamp.
KeyframeSet load_keyframes(const Dataset& dataset, const KeyframeOptions& options);

struct FrameOptions {
  double voxel_leaf_m = 0.3;  // <= 0 disables downsampling
  CovarianceOptions covariance;
};

/// Motion of the sensor over one scan, as the start pose expressed in the
/// scan-end frame: T_G_L^-1 * G_end^-1 * G_start * T_G_L.
RigidTransform sensor_scan_motion(const RigidTransform& gins_start, const RigidTransform& gins_end,
                                  const RigidTransform& t_g_l);

/// Deskews (when the cloud has per-point time), downsamples and estimates
/// covariances.
std::shared_ptr<ScanFrame> prepare_frame(const PointCloud& raw, const RigidTransform& scan_motion,
                                         double scan_period, const FrameOptions& options);

/// All keyframes of one sensor deskewed with extrinsic t_g_l.
std::vector<std::shared_ptr<ScanFrame>> prepare_sensor_frames(const KeyframeSet& keyframes, std::size_t sensor,
                                                              const RigidTransform& t_g_l,
                                                              const FrameOptions& options);

/// A frame participating in matching together with the chain that maps its
/// sensor coordinates to the world.
struct FrameNode {
  std::shared_ptr<const ScanFrame> frame;
  Chain chain;
  std::size_t sensor = 0;
  std::size_t keyframe = 0;
};

struct MatchingOptions {
  AssociationOptions association;
  double pair_radius_m = 15.0;
  int threads = 1;
};

/// Frame pairs (i < j) whose sensor origins lie within the pair radius.
std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(const std::vector<FrameNode>& nodes,
                                                                  const Values& values, double radius_m);

struct MatchTermSet {
  std::vector<std::shared_ptr<MatchPairTerm>> terms;
  std::size_t correspondences = 0;
};

/// Associates every candidate pair at the current values and returns one
/// pair term per non-empty association. Associations run in parallel; the
/// result order depends only on the input.
MatchTermSet build_match_terms(const std::vector<FrameNode>& nodes,
                               const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                               const Values& values, const MatchingOptions& options);

}  // namespace lgcalib
