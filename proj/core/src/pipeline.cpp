#include "lgcalib/pipeline.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lgcalib/calib_lg.hpp"
#include "lgcalib/calib_ml.hpp"
#include "lgcalib/error.hpp"
#include "lgcalib/terrain.hpp"

namespace lgcalib {

namespace fs = std::filesystem;

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

std::string format_pose(const RigidTransform& t) {
  Eigen::Quaterniond q = t.rotation();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Vector3& p = t.translation();
  std::string out;
  for (double v : {p.x(), p.y(), p.z(), q.x(), q.y(), q.z(), q.w()}) {
    if (!out.empty()) out += ' ';
    out += format_number(v + 0.0);  // + 0.0 folds -0 into 0
  }
  return out;
}

std::string to_text(double v) { return format_number(v); }
std::string to_text(int v) { return std::to_string(v); }
std::string to_text(std::int64_t v) { return std::to_string(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::string& v) { return v; }

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw CalibError(ErrorCode::kConfigError, "key '" + key + "': '" + value + "' is not " + expected);
}

template <class T>
T parse_value(const std::string& key, const std::string& value);

template <>
double parse_value<double>(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) {
    bad_value(key, value, "a number");
  }
  return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

template <>
int parse_value<int>(const std::string& key, const std::string& value) {
  return parse_int<int>(key, value);
}

template <>
std::int64_t parse_value<std::int64_t>(const std::string& key, const std::string& value) {
  return parse_int<std::int64_t>(key, value);
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  bad_value(key, value, "a boolean");
}

template <>
std::string parse_value<std::string>(const std::string&, const std::string& value) {
  return value;
}

template <class T>
ConfigKey make_key(std::string name, std::string unit, std::string help, T PipelineConfig::*member) {
  ConfigKey k;
  k.name = name;
  k.unit = std::move(unit);
  k.help = std::move(help);
  k.get = [member](const PipelineConfig& c) { return to_text(c.*member); };
  k.set = [member, name](PipelineConfig& c, const std::string& v) { c.*member = parse_value<T>(name, v); };
  return k;
}

std::vector<ConfigKey> build_keys() {
  using C = PipelineConfig;
  return {
      make_key("dataset", "path", "dataset directory", &C::dataset),
      make_key("output_dir", "path", "directory for report.txt, report.kv and extrinsics.txt", &C::output_dir),
      make_key("initial_extrinsics", "path", "T_G_Lm initial guesses when stage_init is off (empty: identity)",
               &C::initial_extrinsics),
      make_key("keyframe_dist_m", "m", "keyframe translation threshold", &C::keyframe_dist_m),
      make_key("keyframe_angle_deg", "deg", "keyframe rotation threshold", &C::keyframe_angle_deg),
      make_key("scan_period_s", "s", "duration of one spinning scan", &C::scan_period_s),
      make_key("cov_neighbors", "count", "neighbours per point covariance", &C::cov_neighbors),
      make_key("cov_epsilon", "-", "smallest regularized covariance eigenvalue", &C::cov_epsilon),
      make_key("voxel_leaf_m", "m", "voxel filter leaf before matching", &C::voxel_leaf_m),
      make_key("gate_dist_m", "m", "correspondence gate", &C::gate_dist_m),
      make_key("max_corr_per_pair", "count", "correspondence budget per frame pair", &C::max_corr_per_pair),
      make_key("pair_radius_m", "m", "frames farther apart are not matched", &C::pair_radius_m),
      make_key("huber_delta", "-", "Huber threshold on the Mahalanobis norm", &C::huber_delta),
      make_key("lm_max_iterations", "count", "LM iterations per solve", &C::lm_max_iterations),
      make_key("direct_iterations", "count", "DIRECT iterations in rotation init", &C::direct_iterations),
      make_key("direct_max_evals", "count", "DIRECT objective evaluations in rotation init", &C::direct_max_evals),
      make_key("init_voxel_leaf_m", "m", "voxel leaf of the rotation-init clouds", &C::init_voxel_leaf_m),
      make_key("init_gate_m", "m", "nearest-neighbour gate of the rotation-init objective", &C::init_gate_m),
      make_key("init_query_points", "count", "query points of the rotation-init objective", &C::init_query_points),
      make_key("init_max_tilt_deg", "deg", "pitch and roll search bound", &C::init_max_tilt_deg),
      make_key("lg_rounds", "count", "LiDAR-GINS association rounds", &C::lg_rounds),
      make_key("lg_vertical_sigma_m", "m", "prior holding the LiDAR-GINS vertical offset (0: off)",
               &C::lg_vertical_sigma_m),
      make_key("ml_rounds", "count", "multi-LiDAR association rounds", &C::ml_rounds),
      make_key("joint_rounds", "count", "joint association rounds", &C::joint_rounds),
      make_key("ransac_iterations", "count", "ground RANSAC hypotheses", &C::ransac_iterations),
      make_key("ransac_inlier_m", "m", "ground inlier distance", &C::ransac_inlier_m),
      make_key("ransac_min_ratio", "-", "minimum ground inlier fraction of the band", &C::ransac_min_ratio),
      make_key("max_ground_tilt_deg", "deg", "ground normal tilt limit", &C::max_ground_tilt_deg),
      make_key("ground_band_m", "m", "half width of the ground search band around -h_g_m", &C::ground_band_m),
      make_key("patch_radius_m", "m", "terrain patch radius", &C::patch_radius_m),
      make_key("h_g_m", "m", "GINS installation height above ground", &C::h_g_m),
      make_key("height_cb", "-", "height factor covariance on the free slots", &C::height_cb),
      make_key("height_cs", "m^2", "height factor covariance on z", &C::height_cs),
      make_key("gins_prior_rot_deg", "deg", "GINS pose prior rotation sigma", &C::gins_prior_rot_deg),
      make_key("gins_prior_trans_m", "m", "GINS pose prior translation sigma", &C::gins_prior_trans_m),
      make_key("motion_rot_deg", "deg", "motion factor rotation sigma", &C::motion_rot_deg),
      make_key("motion_trans_m", "m", "motion factor translation sigma", &C::motion_trans_m),
      make_key("metric_radius_m", "m", "MME/MPV neighbourhood radius", &C::metric_radius_m),
      make_key("metric_max_points", "count", "MME/MPV query points (0: all)", &C::metric_max_points),
      make_key("stage_init", "bool", "run rotation initialization", &C::stage_init),
      make_key("stage_lidar_gins", "bool", "run LiDAR-GINS refinement", &C::stage_lidar_gins),
      make_key("stage_ground_align", "bool", "run ground alignment", &C::stage_ground_align),
      make_key("stage_multi_lidar", "bool", "run multi-LiDAR calibration", &C::stage_multi_lidar),
      make_key("stage_terrain", "bool", "run terrain analysis", &C::stage_terrain),
      make_key("stage_joint", "bool", "run joint optimization", &C::stage_joint),
      make_key("use_height_factor", "bool", "add the installation height factor", &C::use_height_factor),
      make_key("use_motion_factor", "bool", "add motion constraint factors", &C::use_motion_factor),
      make_key("compute_metrics", "bool", "evaluate MME/MPV of the stitched maps", &C::compute_metrics),
      make_key("threads", "count", "worker threads", &C::threads),
      make_key("seed", "-", "seed of the ground RANSAC", &C::seed),
      make_key("inject_vl_g_z_m", "m", "offset added to T_VL_G z before the joint stage", &C::inject_vl_g_z_m),
  };
}

void require(bool ok, const std::string& what) {
  if (!ok) throw CalibError(ErrorCode::kConfigError, what);
}

}  // namespace

void PipelineConfig::validate() const {
  require(!dataset.empty(), "dataset is not set");
  require(keyframe_dist_m > 0.0 && keyframe_angle_deg > 0.0, "keyframe thresholds must be positive");
  require(scan_period_s > 0.0, "scan_period_s must be positive");
  require(cov_neighbors >= 3, "cov_neighbors must be at least 3");
  require(cov_epsilon > 0.0, "cov_epsilon must be positive");
  require(voxel_leaf_m > 0.0 && init_voxel_leaf_m > 0.0, "voxel leaves must be positive");
  require(gate_dist_m > 0.0 && init_gate_m > 0.0, "gates must be positive");
  require(max_corr_per_pair > 0, "max_corr_per_pair must be positive");
  require(pair_radius_m > 0.0, "pair_radius_m must be positive");
  require(huber_delta > 0.0, "huber_delta must be positive");
  require(lm_max_iterations > 0, "lm_max_iterations must be positive");
  require(direct_iterations > 0 && direct_max_evals > 0 && init_query_points > 0, "DIRECT budget must be positive");
  require(init_max_tilt_deg > 0.0, "init_max_tilt_deg must be positive");
  require(lg_vertical_sigma_m >= 0.0, "lg_vertical_sigma_m must not be negative");
  require(lg_rounds > 0 && ml_rounds > 0 && joint_rounds > 0, "round counts must be positive");
  require(ransac_iterations > 0 && ransac_inlier_m > 0.0 && ransac_min_ratio > 0.0, "RANSAC settings must be positive");
  require(max_ground_tilt_deg > 0.0 && ground_band_m > 0.0, "ground settings must be positive");
  require(patch_radius_m > 0.0, "patch_radius_m must be positive");
  require(!use_height_factor || h_g_m > 0.0, "h_g_m must be positive with the height factor on");
  require(height_cb > 0.0 && height_cs > 0.0, "height covariances must be positive");
  require(gins_prior_rot_deg > 0.0 && gins_prior_trans_m > 0.0, "GINS prior sigmas must be positive");
  require(motion_rot_deg > 0.0 && motion_trans_m > 0.0, "motion sigmas must be positive");
  require(metric_radius_m > 0.0, "metric_radius_m must be positive");
  require(metric_max_points >= 0, "metric_max_points must not be negative");
  require(threads >= 1, "threads must be at least 1");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(PipelineConfig& config, const std::string& key, const std::string& value) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw CalibError(ErrorCode::kConfigError, "unknown configuration key '" + key + "'");
}

void apply_config_file(PipelineConfig& config, const std::string& path) {
  for (const auto& [key, value] : read_key_values(path)) set_config_value(config, key, value);
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig config;
  apply_config_file(config, path);
  return config;
}

std::vector<std::pair<std::string, std::string>> config_echo(const PipelineConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const ConfigKey& k : config_keys()) out.emplace_back(k.name, k.get(config));
  return out;
}

const StageRecord* CalibrationReport::stage(const std::string& name) const {
  for (const StageRecord& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::vector<Vector3> deskewed_points(const KeyframeSet& keyframes, std::size_t sensor, std::size_t keyframe,
                                     const RigidTransform& t_g_l, double voxel_leaf_m) {
  const PointCloud& raw = keyframes.raw[sensor][keyframe];
  PointCloud cloud = raw;
  if (raw.has_per_point_time()) {
    const RigidTransform motion =
        sensor_scan_motion(keyframes.gins_start[keyframe], keyframes.gins[keyframe], t_g_l);
    cloud = motion_compensate(raw, motion, RigidTransform(), keyframes.scan_period);
  }
  if (voxel_leaf_m > 0.0) cloud = voxel_downsample(cloud, voxel_leaf_m);
  return std::move(cloud.points);
}

std::vector<Vector3> stitch_map(const KeyframeSet& keyframes, const std::vector<RigidTransform>& gins,
                                const std::vector<RigidTransform>& extrinsics, double voxel_leaf_m) {
  std::vector<Vector3> map;
  for (std::size_t s = 0; s < keyframes.sensor_count(); ++s) {
    for (std::size_t k = 0; k < keyframes.size(); ++k) {
      const RigidTransform w_l = gins[k] * extrinsics[s];
      for (const Vector3& p : deskewed_points(keyframes, s, k, extrinsics[s], voxel_leaf_m)) map.push_back(w_l * p);
    }
  }
  return map;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

NamedTransforms named(const std::vector<std::string>& ids, const std::vector<RigidTransform>& t,
                      const std::string& prefix) {
  NamedTransforms out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace_back(prefix + ids[i], t[i]);
  return out;
}

}  // namespace

CalibrationReport run_pipeline(const PipelineConfig& cfg) {
  const Clock::time_point start = Clock::now();
  cfg.validate();
  CalibrationReport rep;
  rep.config = config_echo(cfg);

  const Dataset ds = load_dataset(cfg.dataset);
  const KeyframeSet kf = load_keyframes(ds, {cfg.keyframe_dist_m, cfg.keyframe_angle_deg, cfg.scan_period_s});
  const std::size_t ns = kf.sensor_count();
  const std::size_t base = kf.base;
  rep.sensor_ids = kf.sensor_ids;
  rep.base = base;
  rep.keyframes = kf.size();

  FrameOptions frames;
  frames.voxel_leaf_m = cfg.voxel_leaf_m;
  frames.covariance.k = static_cast<std::size_t>(cfg.cov_neighbors);
  frames.covariance.epsilon = cfg.cov_epsilon;
  frames.covariance.threads = cfg.threads;
  MatchingOptions matching;
  matching.association.gate_m = cfg.gate_dist_m;
  matching.association.max_per_pair = static_cast<std::size_t>(cfg.max_corr_per_pair);
  matching.pair_radius_m = cfg.pair_radius_m;
  matching.threads = cfg.threads;
  LmOptions lm;
  lm.kernel.delta = cfg.huber_delta;
  lm.max_iterations = cfg.lm_max_iterations;
  lm.threads = cfg.threads;
  GroundFitOptions ground;
  ground.ransac_iterations = cfg.ransac_iterations;
  ground.inlier_threshold_m = cfg.ransac_inlier_m;
  ground.min_inlier_ratio = cfg.ransac_min_ratio;
  ground.max_tilt_deg = cfg.max_ground_tilt_deg;
  ground.h_g_m = cfg.h_g_m;
  ground.band_half_width_m = cfg.ground_band_m;
  ground.seed = static_cast<std::uint64_t>(cfg.seed);

  auto run_stage = [&](const std::string& name, bool enabled, const std::function<void(StageRecord&)>& body) {
    StageRecord rec;
    rec.name = name;
    if (enabled) {
      const Clock::time_point t0 = Clock::now();
      try {
        body(rec);
      } catch (const CalibError& e) {
        throw CalibError(e.code(), "stage " + name + ": " + e.detail());
      }
      rec.ran = true;
      rec.seconds = seconds_since(t0);
    }
    rep.stages.push_back(std::move(rec));
  };

  std::vector<RigidTransform> ext(ns);
  if (!cfg.stage_init && !cfg.initial_extrinsics.empty()) {
    const NamedTransforms given = read_extrinsics(cfg.initial_extrinsics);
    for (std::size_t s = 0; s < ns; ++s) {
      const auto t = find_transform(given, kf.sensor_ids[s]);
      if (!t) throw CalibError(ErrorCode::kConfigError, "initial extrinsics lack sensor " + kf.sensor_ids[s]);
      ext[s] = *t;
    }
  }

  run_stage("rotation_init", cfg.stage_init, [&](StageRecord& rec) {
    RotationInitOptions ro;
    ro.voxel_leaf_m = cfg.init_voxel_leaf_m;
    ro.gate_m = cfg.init_gate_m;
    ro.query_points = static_cast<std::size_t>(cfg.init_query_points);
    ro.pair_radius_m = cfg.pair_radius_m;
    ro.max_tilt_deg = cfg.init_max_tilt_deg;
    ro.iterations = cfg.direct_iterations;
    ro.max_evaluations = static_cast<std::size_t>(cfg.direct_max_evals);
    ro.threads = cfg.threads;
    for (std::size_t s = 0; s < ns; ++s) {
      const RotationInitResult r = initialize_rotation(kf.raw[s], kf.gins, ro);
      ext[s] = r.extrinsic;
      rec.values.emplace_back(kf.sensor_ids[s] + ".objective_m", r.objective);
      rec.values.emplace_back(kf.sensor_ids[s] + ".evaluations", static_cast<double>(r.search.evaluations));
    }
    rec.extrinsics = named(kf.sensor_ids, ext, "T_G_");
  });
  const std::vector<RigidTransform> initial_ext = ext;

  run_stage("lidar_gins", cfg.stage_lidar_gins, [&](StageRecord& rec) {
    LidarGinsOptions lo;
    lo.frames = frames;
    lo.matching = matching;
    lo.lm = lm;
    lo.rounds = cfg.lg_rounds;
    lo.vertical_prior_sigma_m = cfg.lg_vertical_sigma_m;
    for (std::size_t s = 0; s < ns; ++s) {
      const LidarGinsResult r = calibrate_lidar_gins(kf, s, ext[s], lo);
      ext[s] = r.extrinsic;
      const std::string& id = kf.sensor_ids[s];
      rec.values.emplace_back(id + ".rounds", r.rounds);
      rec.values.emplace_back(id + ".correspondences", static_cast<double>(r.correspondences));
      rec.values.emplace_back(id + ".iterations", r.report.iterations);
      rec.values.emplace_back(id + ".final_cost", r.report.final_cost);
    }
    rec.extrinsics = named(kf.sensor_ids, ext, "T_G_");
  });

  run_stage("ground_align", cfg.stage_ground_align, [&](StageRecord& rec) {
    const std::size_t k = flattest_keyframe(kf.gins);
    std::vector<std::vector<Vector3>> clouds(ns);
    for (std::size_t s = 0; s < ns; ++s) {
      clouds[s] = deskewed_points(kf, s, k, ext[s], 0.0);
      for (Vector3& p : clouds[s]) p = ext[s] * p;
    }
    const GroundAlignResult r = ground_align(ext, base, clouds, ground);
    ext = r.extrinsics;
    rec.values.emplace_back("keyframe", static_cast<double>(k));
    for (std::size_t s = 0; s < ns; ++s) {
      rec.values.emplace_back(kf.sensor_ids[s] + ".delta_h_m", r.delta_h[s]);
      rec.values.emplace_back(kf.sensor_ids[s] + ".ground_rms_m", r.planes[s].inlier_rms);
    }
    rec.extrinsics = named(kf.sensor_ids, ext, "T_G_");
  });

  std::vector<RigidTransform> l0_lm(ns);
  for (std::size_t s = 0; s < ns; ++s) l0_lm[s] = ext[base].inverse() * ext[s];
  l0_lm[base] = RigidTransform();
  BasePoseSet base_poses = init_base_poses(ds.gins, kf.stamps, ext[base]);

  run_stage("multi_lidar", cfg.stage_multi_lidar, [&](StageRecord& rec) {
    MultiLidarOptions mo;
    mo.frames = frames;
    mo.matching = matching;
    mo.lm = lm;
    mo.lm.max_condition = 1e12;
    mo.rounds = cfg.ml_rounds;
    const MultiLidarResult r = calibrate_multi_lidar(kf, base_poses, l0_lm, ext[base], mo);
    l0_lm = r.extrinsics;
    base_poses = r.base_poses;
    for (std::size_t s = 0; s < ns; ++s) ext[s] = ext[base] * l0_lm[s];
    rec.solver = r.report;
    rec.values.emplace_back("rounds", r.rounds);
    rec.values.emplace_back("correspondences", static_cast<double>(r.correspondences));
    rec.extrinsics = named(kf.sensor_ids, l0_lm, "T_L0_");
  });

  std::optional<RigidTransform> t_vl_l0;
  run_stage("terrain", cfg.stage_terrain, [&](StageRecord& rec) {
    std::vector<std::vector<Vector3>> clouds(kf.size());
    for (std::size_t k = 0; k < kf.size(); ++k) clouds[k] = deskewed_points(kf, base, k, ext[base], cfg.voxel_leaf_m);
    GroundMapOptions go;
    go.fit = ground;
    const PointCloud map = extract_ground_map(base_poses, clouds, ext[base], go);
    const GroundPatch patch = select_flattest_patch(map, base_poses, cfg.patch_radius_m);
    t_vl_l0 = vlidar_extrinsic(patch, base_poses.poses[patch.keyframe]);
    rec.values.emplace_back("ground_points", static_cast<double>(map.size()));
    rec.values.emplace_back("patch_keyframe", static_cast<double>(patch.keyframe));
    rec.values.emplace_back("patch_points", static_cast<double>(patch.points.size()));
    rec.values.emplace_back("patch_roughness_m", patch.roughness);
    rec.extrinsics = {{"T_VL_L0", *t_vl_l0}};
  });
  rep.t_vl_l0 = t_vl_l0;

  run_stage("joint", cfg.stage_joint, [&](StageRecord& rec) {
    if (!t_vl_l0) throw CalibError(ErrorCode::kIncompleteStages, "joint optimization needs the terrain stage");
    JointState state = initial_joint_state(kf, ext[base], l0_lm, base_poses, *t_vl_l0);
    if (cfg.use_height_factor) {
      // Start X at the observed height so the solver does not travel along z.
      Vector3 t = state.t_vl_g.translation();
      t.z() = cfg.h_g_m;
      state.t_vl_g = RigidTransform(state.t_vl_g.rotation(), t);
    }
    state.t_vl_g = RigidTransform::from_translation(0.0, 0.0, cfg.inject_vl_g_z_m) * state.t_vl_g;
    JointOptions jo;
    jo.frames = frames;
    jo.matching = matching;
    jo.lm = lm;
    jo.rounds = cfg.joint_rounds;
    jo.height = {cfg.h_g_m, cfg.height_cb, cfg.height_cs};
    jo.use_height = cfg.use_height_factor;
    jo.use_motion = cfg.use_motion_factor;
    jo.prior_sigma_rot_deg = cfg.gins_prior_rot_deg;
    jo.prior_sigma_trans_m = cfg.gins_prior_trans_m;
    jo.motion_sigma_rot_deg = cfg.motion_rot_deg;
    jo.motion_sigma_trans_m = cfg.motion_trans_m;
    const JointResult r = joint_optimize(kf, state, jo);
    ext = r.state.sensor_extrinsics();
    l0_lm = r.state.l0_lm;
    rep.t_vl_g = r.state.t_vl_g;
    rep.joint_costs = r.final_costs;
    rec.solver = r.report;
    rec.values.emplace_back("rounds", r.rounds);
    rec.values.emplace_back("correspondences", static_cast<double>(r.correspondences));
    rec.extrinsics = named(kf.sensor_ids, ext, "T_G_");
    rec.extrinsics.emplace_back("T_VL_G", r.state.t_vl_g);
  });

  rep.extrinsics = ext;
  rep.l0_lm = l0_lm;

  if (cfg.compute_metrics) {
    run_stage("metrics", true, [&](StageRecord&) {
      MetricOptions mo;
      mo.radius_m = cfg.metric_radius_m;
      mo.max_query_points = static_cast<std::size_t>(cfg.metric_max_points);
      mo.threads = cfg.threads;
      rep.metrics_initial = evaluate_map(stitch_map(kf, kf.gins, initial_ext, cfg.voxel_leaf_m), mo);
      rep.metrics_final = evaluate_map(stitch_map(kf, kf.gins, ext, cfg.voxel_leaf_m), mo);
    });
  }

  if (ds.ground_truth) {
    const auto gt_base = find_transform(*ds.ground_truth, kf.sensor_ids[base]);
    for (std::size_t s = 0; s < ns; ++s) {
      const auto gt = find_transform(*ds.ground_truth, kf.sensor_ids[s]);
      if (!gt) continue;
      SensorError e;
      e.id = kf.sensor_ids[s];
      e.gins = extrinsic_error(ext[s], *gt);
      if (s != base && gt_base) e.base = extrinsic_error(l0_lm[s], gt_base->inverse() * *gt);
      rep.errors.push_back(e);
    }
  }
  rep.total_seconds = seconds_since(start);
  return rep;
}

std::vector<std::pair<std::string, std::string>> CalibrationReport::key_values() const {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string ids;
  for (const std::string& id : sensor_ids) ids += (ids.empty() ? "" : " ") + id;
  kv.emplace_back("sensors", ids);
  kv.emplace_back("base", sensor_ids.empty() ? "" : sensor_ids[base]);
  kv.emplace_back("keyframes", std::to_string(keyframes));
  for (const auto& [k, v] : config) kv.emplace_back("config." + k, v);
  for (const StageRecord& s : stages) {
    const std::string p = "stage." + s.name + ".";
    kv.emplace_back(p + "ran", s.ran ? "true" : "false");
    for (const auto& [name, t] : s.extrinsics) kv.emplace_back(p + name, format_pose(t));
    for (const auto& [name, v] : s.values) kv.emplace_back(p + name, format_number(v));
    if (s.solver) {
      kv.emplace_back(p + "solver.iterations", std::to_string(s.solver->iterations));
      kv.emplace_back(p + "solver.initial_cost", format_number(s.solver->initial_cost));
      kv.emplace_back(p + "solver.final_cost", format_number(s.solver->final_cost));
      kv.emplace_back(p + "solver.termination", s.solver->termination_reason);
    }
  }
  for (std::size_t s = 0; s < extrinsics.size(); ++s) kv.emplace_back("final.T_G_" + sensor_ids[s], format_pose(extrinsics[s]));
  for (std::size_t s = 0; s < l0_lm.size(); ++s) {
    if (s != base) kv.emplace_back("final.T_L0_" + sensor_ids[s], format_pose(l0_lm[s]));
  }
  if (t_vl_g) kv.emplace_back("final.T_VL_G", format_pose(*t_vl_g));
  if (t_vl_l0) kv.emplace_back("final.T_VL_L0", format_pose(*t_vl_l0));
  if (joint_costs) {
    for (std::size_t f = 0; f < kFactorFamilyCount; ++f) {
      kv.emplace_back(std::string("joint.cost.") + family_name(static_cast<FactorFamily>(f)),
                      format_number(joint_costs->values[f]));
    }
  }
  auto metrics = [&](const char* name, const std::optional<MapMetrics>& m) {
    if (!m) return;
    const std::string p = std::string("metrics.") + name + ".";
    kv.emplace_back(p + "mme_nat", format_number(m->mme));
    kv.emplace_back(p + "mpv_m", format_number(m->mpv));
    kv.emplace_back(p + "evaluated", std::to_string(m->n_points_evaluated));
    kv.emplace_back(p + "skipped", std::to_string(m->n_points_skipped));
    kv.emplace_back(p + "radius_m", format_number(m->radius));
  };
  metrics("initial", metrics_initial);
  metrics("final", metrics_final);
  for (const SensorError& e : errors) {
    kv.emplace_back("error." + e.id + ".rot_deg", format_number(e.gins.rot_deg));
    kv.emplace_back("error." + e.id + ".trans_m", format_number(e.gins.trans_m));
    if (e.base) {
      kv.emplace_back("error." + e.id + ".base_rot_deg", format_number(e.base->rot_deg));
      kv.emplace_back("error." + e.id + ".base_trans_m", format_number(e.base->trans_m));
    }
  }
  for (const StageRecord& s : stages) {
    if (s.ran) kv.emplace_back("time." + s.name + "_s", format_number(s.seconds));
  }
  kv.emplace_back("time.total_s", format_number(total_seconds));
  return kv;
}

namespace {

std::string describe_pose(const RigidTransform& t) {
  const Vector3 ypr = t.ypr();
  char buf[160];
  std::snprintf(buf, sizeof(buf), "t = (%.4f, %.4f, %.4f) m  ypr = (%.4f, %.4f, %.4f) deg", t.translation().x(),
                t.translation().y(), t.translation().z(), rad2deg(ypr.x()), rad2deg(ypr.y()), rad2deg(ypr.z()));
  return buf;
}

}  // namespace

std::string CalibrationReport::text() const {
  std::ostringstream os;
  os << "Calibration report\n";
  os << "sensors:";
  for (std::size_t s = 0; s < sensor_ids.size(); ++s) os << ' ' << sensor_ids[s] << (s == base ? " (base)" : "");
  os << "\nkeyframes: " << keyframes << "\n\nStages\n";
  char line[200];
  for (const StageRecord& s : stages) {
    if (s.ran) {
      std::snprintf(line, sizeof(line), "  %-14s %8.2f s", s.name.c_str(), s.seconds);
    } else {
      std::snprintf(line, sizeof(line), "  %-14s  skipped", s.name.c_str());
    }
    os << line;
    if (s.solver) os << "  (LM " << s.solver->iterations << " it, " << s.solver->termination_reason << ")";
    os << '\n';
  }
  os << "\nFinal extrinsics\n";
  for (std::size_t s = 0; s < extrinsics.size(); ++s) {
    os << "  T_G_" << sensor_ids[s] << "   " << describe_pose(extrinsics[s]) << '\n';
  }
  for (std::size_t s = 0; s < l0_lm.size(); ++s) {
    if (s != base) os << "  T_L0_" << sensor_ids[s] << "  " << describe_pose(l0_lm[s]) << '\n';
  }
  if (t_vl_g) os << "  T_VL_G    " << describe_pose(*t_vl_g) << '\n';
  if (t_vl_l0) os << "  T_VL_L0   " << describe_pose(*t_vl_l0) << '\n';
  if (joint_costs) {
    os << "\nJoint cost by family\n";
    for (std::size_t f = 0; f < kFactorFamilyCount; ++f) {
      os << "  " << family_name(static_cast<FactorFamily>(f)) << ": " << format_number(joint_costs->values[f]) << '\n';
    }
  }
  if (metrics_initial && metrics_final) {
    os << "\nMap consistency (radius " << format_number(metrics_final->radius) << " m)\n";
    os << "  initial: MME " << format_number(metrics_initial->mme) << " nat, MPV " << format_number(metrics_initial->mpv)
       << " m\n";
    os << "  final:   MME " << format_number(metrics_final->mme) << " nat, MPV " << format_number(metrics_final->mpv)
       << " m\n";
  }
  if (!errors.empty()) {
    os << "\nErrors against ground truth\n";
    for (const SensorError& e : errors) {
      std::snprintf(line, sizeof(line), "  %-4s T_G: %.5f deg %.5f m", e.id.c_str(), e.gins.rot_deg, e.gins.trans_m);
      os << line;
      if (e.base) {
        std::snprintf(line, sizeof(line), "   T_L0: %.5f deg %.5f m", e.base->rot_deg, e.base->trans_m);
        os << line;
      }
      os << '\n';
    }
  }
  os << "\ntotal time: " << format_number(total_seconds) << " s\n";
  return os.str();
}

void write_report(const CalibrationReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CalibError(ErrorCode::kIoError, "cannot create " + dir + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw CalibError(ErrorCode::kIoError, "cannot write " + (fs::path(dir) / name).string());
    return out;
  };
  {
    std::ofstream out = open("report.txt");
    out << report.text();
  }
  {
    std::ofstream out = open("report.kv");
    for (const auto& [k, v] : report.key_values()) out << k << " = " << v << '\n';
  }
  write_extrinsics(fs::path(dir) / "extrinsics.txt", named(report.sensor_ids, report.extrinsics, ""));
}

}  // namespace lgcalib
