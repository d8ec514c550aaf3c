#include "lgcalib/calib_ml.hpp"

#include <string>

#include "lgcalib/error.hpp"

namespace lgcalib {

BasePoseSet init_base_poses(const Trajectory& gins, const std::vector<double>& stamps,
                            const RigidTransform& t_g_l0) {
  BasePoseSet out;
  out.stamps = stamps;
  out.poses.reserve(stamps.size());
  for (double t : stamps) out.poses.push_back(gins.pose_at(t) * t_g_l0);
  return out;
}

namespace {

bool moved(const RigidTransform& a, const RigidTransform& b, double trans_m, double rot_deg) {
  const ExtrinsicError e = extrinsic_error(a, b);
  return e.trans_m > trans_m || e.rot_deg > rot_deg;
}

}  // namespace

MultiLidarResult calibrate_multi_lidar(const KeyframeSet& keyframes, const BasePoseSet& initial_poses,
                                       const std::vector<RigidTransform>& initial_extrinsics,
                                       const RigidTransform& t_g_l0, const MultiLidarOptions& options) {
  const std::size_t ns = keyframes.sensor_count();
  const std::size_t nk = keyframes.size();
  if (initial_poses.size() != nk) {
    throw CalibError(ErrorCode::kConfigError, "base pose count does not match the keyframes");
  }
  if (initial_extrinsics.size() != ns) {
    throw CalibError(ErrorCode::kConfigError, "one initial extrinsic per sensor is required");
  }
  if (nk < 2) throw CalibError(ErrorCode::kInsufficientMotion, "multi-LiDAR calibration needs two keyframes");

  MultiLidarResult result;
  result.extrinsics = initial_extrinsics;
  result.extrinsics[keyframes.base] = RigidTransform();
  result.base_poses = initial_poses;

  std::vector<RigidTransform> deskewed_with(ns);
  std::vector<std::vector<std::shared_ptr<ScanFrame>>> frames(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    deskewed_with[s] = result.extrinsics[s];
    frames[s] = prepare_sensor_frames(keyframes, s, t_g_l0 * deskewed_with[s], options.frames);
  }

  for (int round = 0; round < options.rounds; ++round) {
    for (std::size_t s = 0; s < ns; ++s) {
      if (moved(result.extrinsics[s], deskewed_with[s], options.redeskew_trans_m, options.redeskew_rot_deg)) {
        deskewed_with[s] = result.extrinsics[s];
        frames[s] = prepare_sensor_frames(keyframes, s, t_g_l0 * deskewed_with[s], options.frames);
      }
    }

    Problem problem;
    std::vector<int> pose_ids(nk);
    for (std::size_t k = 0; k < nk; ++k) {
      pose_ids[k] = problem.add_variable(VariableKind::kPose, result.base_poses.poses[k], k == 0,
                                         "W_L0[" + std::to_string(k) + "]");
    }
    std::vector<int> ext_ids(ns, -1);
    for (std::size_t s = 0; s < ns; ++s) {
      if (s == keyframes.base) continue;
      ext_ids[s] = problem.add_variable(VariableKind::kExtrinsic, result.extrinsics[s], false,
                                        "T_L0_" + keyframes.sensor_ids[s]);
    }

    std::vector<FrameNode> nodes;
    for (std::size_t s = 0; s < ns; ++s) {
      for (std::size_t k = 0; k < nk; ++k) {
        Chain chain{ChainElement::var(pose_ids[k])};
        if (ext_ids[s] >= 0) chain.push_back(ChainElement::var(ext_ids[s]));
        nodes.push_back({frames[s][k], std::move(chain), s, k});
      }
    }
    const Values values = problem.values();
    std::vector<std::pair<std::size_t, std::size_t>> pairs =
        candidate_pairs(nodes, values, options.matching.pair_radius_m);
    if (!options.cross_sensor) {
      std::erase_if(pairs, [&](const auto& p) { return nodes[p.first].sensor != nodes[p.second].sensor; });
    }
    const MatchTermSet matches = build_match_terms(nodes, pairs, values, options.matching);
    for (const auto& t : matches.terms) problem.add_term(t);
    result.report = lm_minimize(problem, options.lm);
    result.correspondences = matches.correspondences;
    result.rounds = round + 1;

    const Values solved = problem.values();
    bool converged = true;
    for (std::size_t s = 0; s < ns; ++s) {
      if (ext_ids[s] < 0) continue;
      const RigidTransform& updated = solved[static_cast<std::size_t>(ext_ids[s])];
      if (moved(updated, result.extrinsics[s], options.converged_trans_m, options.converged_rot_deg)) {
        converged = false;
      }
      result.extrinsics[s] = updated;
    }
    for (std::size_t k = 0; k < nk; ++k) result.base_poses.poses[k] = solved[static_cast<std::size_t>(pose_ids[k])];
    if (converged) break;
  }
  return result;
}

}  // namespace lgcalib
