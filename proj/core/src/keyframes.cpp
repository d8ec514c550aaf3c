#include "lgcalib/keyframes.hpp"

#include "lgcalib/error.hpp"
#include "lgcalib/parallel.hpp"
#include "lgcalib/pcd_io.hpp"

namespace lgcalib {

KeyframeSet load_keyframes(const Dataset& dataset, const KeyframeOptions& options) {
  const SensorInfo& base = dataset.base_sensor();
  const std::vector<ScanFile>& base_scans = dataset.scans.at(base.id);

  std::vector<TimedPose> at_scans;
  for (const ScanFile& f : base_scans) {
    if (!dataset.gins.covers(f.stamp) || !dataset.gins.covers(f.stamp - options.scan_period_s)) continue;
    at_scans.push_back({f.stamp, dataset.gins.pose_at(f.stamp)});
  }
  if (at_scans.empty()) {
    throw CalibError(ErrorCode::kDatasetError, "no base scan is covered by the GINS trajectory");
  }
  const Trajectory scan_trajectory(at_scans);
  const KeyframeIndex index = select_keyframes(scan_trajectory, options.dist_thresh_m, options.angle_thresh_deg);

  KeyframeSet set;
  set.scan_period = options.scan_period_s;
  for (std::size_t s = 0; s < dataset.sensors.size(); ++s) {
    set.sensor_ids.push_back(dataset.sensors[s].id);
    if (dataset.sensors[s].base) set.base = s;
  }
  set.raw.resize(dataset.sensors.size());
  for (std::size_t k = 0; k < index.size(); ++k) {
    const double t = index.timestamps[k];
    set.stamps.push_back(t);
    set.gins.push_back(dataset.gins.pose_at(t));
    set.gins_start.push_back(dataset.gins.pose_at(t - options.scan_period_s));
    for (std::size_t s = 0; s < dataset.sensors.size(); ++s) {
      const ScanFile& file = find_scan(dataset, dataset.sensors[s].id, t);
      PointCloud cloud = read_pcd(file.path);
      cloud.timestamp = file.stamp;
      cloud.sensor_id = dataset.sensors[s].id;
      set.raw[s].push_back(std::move(cloud));
    }
  }
  return set;
}

RigidTransform sensor_scan_motion(const RigidTransform& gins_start, const RigidTransform& gins_end,
                                  const RigidTransform& t_g_l) {
  return t_g_l.inverse() * gins_end.inverse() * gins_start * t_g_l;
}

std::shared_ptr<ScanFrame> prepare_frame(const PointCloud& raw, const RigidTransform& scan_motion,
                                         double scan_period, const FrameOptions& options) {
  PointCloud cloud = raw.has_per_point_time() ? motion_compensate(raw, scan_motion, RigidTransform(), scan_period)
                                              : raw;
  if (options.voxel_leaf_m > 0.0) cloud = voxel_downsample(cloud, options.voxel_leaf_m);
  cloud.timestamp = raw.timestamp;
  cloud.sensor_id = raw.sensor_id;
  return ScanFrame::build(cloud, options.covariance);
}

std::vector<std::shared_ptr<ScanFrame>> prepare_sensor_frames(const KeyframeSet& keyframes, std::size_t sensor,
                                                              const RigidTransform& t_g_l,
                                                              const FrameOptions& options) {
  std::vector<std::shared_ptr<ScanFrame>> frames(keyframes.size());
  FrameOptions inner = options;
  inner.covariance.threads = 1;
  parallel_for(keyframes.size(), options.covariance.threads, [&](std::size_t k) {
    const RigidTransform motion = sensor_scan_motion(keyframes.gins_start[k], keyframes.gins[k], t_g_l);
    frames[k] = prepare_frame(keyframes.raw[sensor][k], motion, keyframes.scan_period, inner);
  });
  return frames;
}

std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(const std::vector<FrameNode>& nodes,
                                                                  const Values& values, double radius_m) {
  std::vector<Vector3> origins;
  origins.reserve(nodes.size());
  for (const FrameNode& n : nodes) origins.push_back(evaluate_chain(n.chain, values).translation());
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if ((origins[i] - origins[j]).norm() <= radius_m) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

MatchTermSet build_match_terms(const std::vector<FrameNode>& nodes,
                               const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                               const Values& values, const MatchingOptions& options) {
  std::vector<RigidTransform> poses;
  poses.reserve(nodes.size());
  for (const FrameNode& n : nodes) poses.push_back(evaluate_chain(n.chain, values));

  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> found(pairs.size());
  parallel_for(pairs.size(), options.threads, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    found[p] = associate_frames(*nodes[i].frame, poses[i], *nodes[j].frame, poses[j], options.association);
  });

  MatchTermSet out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (found[p].empty()) continue;
    const auto [i, j] = pairs[p];
    out.correspondences += found[p].size();
    out.terms.push_back(std::make_shared<MatchPairTerm>(nodes[i].frame, nodes[i].chain, nodes[j].frame,
                                                        nodes[j].chain, std::move(found[p])));
  }
  return out;
}

}  // namespace lgcalib
