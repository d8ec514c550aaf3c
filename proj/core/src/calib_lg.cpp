#include "lgcalib/calib_lg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "lgcalib/error.hpp"
#include "lgcalib/parallel.hpp"

namespace lgcalib {

void Rig::validate() const {
  if (sensors.empty() || base >= sensors.size() || !sensors[base].base) {
    throw CalibError(ErrorCode::kConfigError, "rig needs exactly one base sensor");
  }
  if (std::count_if(sensors.begin(), sensors.end(), [](const SensorInfo& s) { return s.base; }) != 1) {
    throw CalibError(ErrorCode::kConfigError, "rig needs exactly one base sensor");
  }
  if (extrinsics.size() != sensors.size()) {
    throw CalibError(ErrorCode::kConfigError, "one extrinsic per sensor required");
  }
}

// ---------------------------------------------------------------------------

Eigen::Quaterniond RotationObjective::from_ypr(const Vector3& ypr) {
  return RigidTransform::from_ypr(ypr[0], ypr[1], ypr[2], Vector3::Zero()).rotation();
}

RotationObjective::RotationObjective(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& gins,
                                     const RotationInitOptions& options)
    : gins_(gins), options_(options) {
  if (clouds.size() != gins.size()) {
    throw CalibError(ErrorCode::kConfigError, "one GINS pose per cloud required");
  }
  frames_.resize(clouds.size());
  std::size_t total = 0;
  for (std::size_t k = 0; k < clouds.size(); ++k) {
    PointCloud c = clouds[k];
    c.per_point_time.clear();
    frames_[k].points = voxel_downsample(c, options.voxel_leaf_m).points;
    frames_[k].tree = KdTree(frames_[k].points);
    total += frames_[k].points.size();
  }
  neighbours_.resize(clouds.size());
  for (std::size_t i = 0; i < gins.size(); ++i) {
    for (std::size_t j = 0; j < gins.size(); ++j) {
      if (i != j && (gins[i].translation() - gins[j].translation()).norm() <= options.pair_radius_m) {
        neighbours_[i].push_back(j);
      }
    }
  }
  const std::size_t stride = std::max<std::size_t>(1, total / std::max<std::size_t>(1, options.query_points));
  std::size_t running = 0;
  for (std::size_t k = 0; k < frames_.size(); ++k) {
    for (std::size_t p = 0; p < frames_[k].points.size(); ++p, ++running) {
      if (running % stride == 0 && !neighbours_[k].empty()) queries_.emplace_back(k, p);
    }
  }
}

double RotationObjective::operator()(const Eigen::Quaterniond& rotation) const {
  if (queries_.empty()) return options_.gate_m;
  const RigidTransform ext = RigidTransform::from_rotation(rotation);
  const RigidTransform ext_inv = ext.inverse();
  std::vector<double> dist(queries_.size());
  parallel_for(queries_.size(), options_.threads, [&](std::size_t q) {
    const auto [i, p] = queries_[q];
    const Vector3 w = gins_[i] * (ext * frames_[i].points[p]);
    double best = options_.gate_m;
    for (std::size_t j : neighbours_[i]) {
      const Vector3 local = ext_inv * (gins_[j].inverse() * w);
      if (auto nb = frames_[j].tree.nearest(local, best)) best = std::min(best, nb->distance);
    }
    dist[q] = best;
  });
  double sum = 0.0;
  for (double d : dist) sum += d;
  return sum / static_cast<double>(dist.size());
}

double yaw_span_deg(const std::vector<RigidTransform>& poses) {
  if (poses.empty()) return 0.0;
  double prev = poses.front().ypr()[0];
  double unwrapped = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const double yaw = poses[i].ypr()[0];
    double step = yaw - prev;
    while (step > kPi) step -= 2.0 * kPi;
    while (step < -kPi) step += 2.0 * kPi;
    unwrapped += step;
    prev = yaw;
    lo = std::min(lo, unwrapped);
    hi = std::max(hi, unwrapped);
  }
  return rad2deg(hi - lo);
}

RotationInitResult initialize_rotation(const std::vector<PointCloud>& clouds, const std::vector<RigidTransform>& gins,
                                       const RotationInitOptions& options) {
  if (clouds.size() < 2 || yaw_span_deg(gins) < options.min_yaw_span_deg) {
    throw CalibError(ErrorCode::kInsufficientMotion, "rotation initialization needs keyframes spanning at least " +
                                                         std::to_string(options.min_yaw_span_deg) + " deg of yaw");
  }
  const RotationObjective objective(clouds, gins, options);
  SearchSpace space;
  const double tilt = deg2rad(options.max_tilt_deg);
  space.lower = Eigen::Vector3d(-kPi, -tilt, -tilt);
  space.upper = Eigen::Vector3d(kPi, tilt, tilt);
  space.max_evaluations = options.max_evaluations;
  DirectOptions direct;
  direct.iterations = options.iterations;
  RotationInitResult result;
  result.search = direct_search(
      [&](const Eigen::VectorXd& x) { return objective(RotationObjective::from_ypr(x)); }, space, direct);
  result.extrinsic = RigidTransform::from_rotation(RotationObjective::from_ypr(result.search.argmin));
  result.objective = result.search.value;
  return result;
}

// ---------------------------------------------------------------------------

LidarGinsResult calibrate_lidar_gins(const KeyframeSet& keyframes, std::size_t sensor, const RigidTransform& initial,
                                     const LidarGinsOptions& options) {
  if (sensor >= keyframes.sensor_count()) throw CalibError(ErrorCode::kConfigError, "sensor index out of range");
  if (keyframes.size() < 2) {
    throw CalibError(ErrorCode::kInsufficientMotion, "LiDAR-GINS calibration needs at least two keyframes");
  }
  LidarGinsResult result;
  result.extrinsic = initial;
  RigidTransform deskewed_with = initial;
  std::vector<std::shared_ptr<ScanFrame>> frames = prepare_sensor_frames(keyframes, sensor, initial, options.frames);

  for (int round = 0; round < options.rounds; ++round) {
    const ExtrinsicError drift = extrinsic_error(result.extrinsic, deskewed_with);
    if (drift.trans_m > options.redeskew_trans_m || drift.rot_deg > options.redeskew_rot_deg) {
      frames = prepare_sensor_frames(keyframes, sensor, result.extrinsic, options.frames);
      deskewed_with = result.extrinsic;
    }
    Problem problem;
    const int x = problem.add_variable(VariableKind::kExtrinsic, result.extrinsic, false, "T_G_L");
    std::vector<FrameNode> nodes;
    for (std::size_t k = 0; k < keyframes.size(); ++k) {
      nodes.push_back({frames[k], {ChainElement::fixed(keyframes.gins[k]), ChainElement::var(x)}, sensor, k});
    }
    const Values values = problem.values();
    const MatchTermSet matches =
        build_match_terms(nodes, candidate_pairs(nodes, values, options.matching.pair_radius_m), values,
                          options.matching);
    if (matches.correspondences == 0) {
      throw CalibError(ErrorCode::kDegenerateGeometry, "no correspondences between keyframes of " +
                                                           keyframes.sensor_ids[sensor]);
    }
    for (const auto& t : matches.terms) problem.add_term(t);
    if (options.vertical_prior_sigma_m > 0.0) {
      // Log(Z^-1 T) carries R_Z^T (t - t_Z) in its translation slot, so the
      // {G} vertical offset is a . v with a = R_Z^T e_z.
      Vector6 a = Vector6::Zero();
      a.tail<3>() = initial.rotation().inverse() * Vector3::UnitZ();
      const double w = 1.0 / (options.vertical_prior_sigma_m * options.vertical_prior_sigma_m);
      problem.add_term(std::make_shared<WeightedResidualTerm>(make_prior_factor(x, initial), w * a * a.transpose()));
    }
    result.report = lm_minimize(problem, options.lm);
    result.correspondences = matches.correspondences;
    const double mean_cost = result.report.final_cost / static_cast<double>(matches.correspondences);
    if (!result.round_costs.empty() && mean_cost > options.divergence_ratio * result.round_costs.back()) {
      throw CalibError(ErrorCode::kDivergedSolve, "LiDAR-GINS cost increased across rounds for " +
                                                      keyframes.sensor_ids[sensor]);
    }
    result.round_costs.push_back(mean_cost);
    const RigidTransform updated = problem.values()[static_cast<std::size_t>(x)];
    const ExtrinsicError change = extrinsic_error(updated, result.extrinsic);
    result.extrinsic = updated;
    result.rounds = round + 1;
    if (change.trans_m < options.converged_trans_m && change.rot_deg < options.converged_rot_deg) break;
  }
  return result;
}

// ---------------------------------------------------------------------------

PlaneModel fit_plane_least_squares(std::span<const Vector3> points) {
  if (points.size() < 3) throw CalibError(ErrorCode::kTooFewPoints, "plane fit needs at least 3 points");
  Vector3 mean = Vector3::Zero();
  for (const Vector3& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Matrix3 cov = Matrix3::Zero();
  for (const Vector3& p : points) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Matrix3> eig(cov);
  const Vector3 n = eig.eigenvectors().col(0);
  return PlaneModel::canonical(n, -n.dot(mean));
}

namespace {

std::vector<std::size_t> plane_inliers(const PlaneModel& plane, std::span<const Vector3> points,
                                       const std::vector<std::size_t>& candidates, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i : candidates) {
    if (std::abs(plane.signed_distance(points[i])) <= threshold) out.push_back(i);
  }
  return out;
}

std::vector<Vector3> gather(std::span<const Vector3> points, const std::vector<std::size_t>& idx) {
  std::vector<Vector3> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(points[i]);
  return out;
}

}  // namespace

GroundPlane fit_ground_plane(std::span<const Vector3> points, const GroundFitOptions& options) {
  std::vector<std::size_t> band;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (std::abs(points[i].z() + options.h_g_m) <= options.band_half_width_m) band.push_back(i);
  }
  if (band.size() < options.min_points) {
    throw CalibError(ErrorCode::kNoGroundFound, "only " + std::to_string(band.size()) +
                                                    " points in the ground band");
  }
  const double min_nz = std::cos(deg2rad(options.max_tilt_deg));
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, band.size() - 1);
  std::size_t best_count = 0;
  PlaneModel best;
  for (int it = 0; it < options.ransac_iterations; ++it) {
    const std::size_t a = band[pick(rng)];
    const std::size_t b = band[pick(rng)];
    const std::size_t c = band[pick(rng)];
    const Vector3 n = (points[b] - points[a]).cross(points[c] - points[a]);
    if (n.norm() < 1e-9) continue;
    const PlaneModel h = PlaneModel::canonical(n, -n.dot(points[a]));
    if (h.normal.z() < min_nz) continue;
    std::size_t count = 0;
    for (std::size_t i : band) count += std::abs(h.signed_distance(points[i])) <= options.inlier_threshold_m;
    if (count > best_count) {
      best_count = count;
      best = h;
    }
  }
  if (best_count < 3 || static_cast<double>(best_count) < options.min_inlier_ratio * static_cast<double>(band.size())) {
    throw CalibError(ErrorCode::kNoGroundFound, "RANSAC found " + std::to_string(best_count) + " of " +
                                                    std::to_string(band.size()) + " points on a ground plane");
  }

  GroundPlane out;
  std::vector<std::size_t> inliers = plane_inliers(best, points, band, options.inlier_threshold_m);
  for (int refine = 0; refine < 2; ++refine) {
    const PlaneModel fitted = fit_plane_least_squares(gather(points, inliers));
    std::vector<std::size_t> next = plane_inliers(fitted, points, band, options.inlier_threshold_m);
    out.plane = fitted;
    if (next.size() < 3) break;
    inliers = std::move(next);
  }
  out.plane = fit_plane_least_squares(gather(points, inliers));
  if (out.plane.normal.z() < min_nz) {
    throw CalibError(ErrorCode::kNoGroundFound, "ground plane tilted beyond the limit");
  }
  double ss = 0.0;
  for (std::size_t i : inliers) ss += std::pow(out.plane.signed_distance(points[i]), 2);
  out.inlier_count = inliers.size();
  out.inlier_rms = std::sqrt(ss / static_cast<double>(inliers.size()));
  out.inliers = std::move(inliers);
  return out;
}

GroundAlignResult ground_align(const std::vector<RigidTransform>& extrinsics, std::size_t base,
                               const std::vector<std::vector<Vector3>>& clouds_in_g,
                               const GroundFitOptions& options) {
  if (clouds_in_g.size() != extrinsics.size() || base >= extrinsics.size()) {
    throw CalibError(ErrorCode::kConfigError, "one cloud per sensor required for ground alignment");
  }
  GroundAlignResult out;
  for (const auto& cloud : clouds_in_g) out.planes.push_back(fit_ground_plane(cloud, options));
  const double d0 = out.planes[base].plane.intercept;
  for (std::size_t m = 0; m < extrinsics.size(); ++m) {
    const double dh = m == base ? 0.0 : out.planes[m].plane.intercept - d0;
    out.delta_h.push_back(dh);
    out.extrinsics.push_back(m == base ? extrinsics[m]
                                       : RigidTransform::from_translation(Vector3(0.0, 0.0, dh)) * extrinsics[m]);
  }
  return out;
}

std::size_t flattest_keyframe(const std::vector<RigidTransform>& gins) {
  if (gins.empty()) throw CalibError(ErrorCode::kEmptyTrajectory, "no keyframes");
  std::size_t best = 0;
  double best_tilt = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < gins.size(); ++k) {
    const Vector3 ypr = gins[k].ypr();
    const double tilt = std::abs(ypr[1]) + std::abs(ypr[2]);
    if (tilt < best_tilt) {
      best_tilt = tilt;
      best = k;
    }
  }
  return best;
}

}  // namespace lgcalib
