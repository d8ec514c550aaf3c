#include "lgcalib/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include "lgcalib/error.hpp"
#include "lgcalib/parallel.hpp"
#include "lgcalib/pcd_io.hpp"

namespace lgcalib::sim {

namespace fs = std::filesystem;

namespace {

constexpr double kMarchStep = 0.05;
constexpr int kBisections = 80;

double window(double r, double radius) {
  if (r >= radius) return 0.0;
  const double u = 1.0 - (r * r) / (radius * radius);
  return u * u;
}

// Parameter interval in which the ray's xy lies inside the patch disc.
bool disc_interval(const TerrainPatch& p, const Vector3& o, const Vector3& d, double max_range, double& t0,
                   double& t1) {
  const double ox = o.x() - p.center_x;
  const double oy = o.y() - p.center_y;
  const double a = d.x() * d.x() + d.y() * d.y();
  const double b = 2.0 * (ox * d.x() + oy * d.y());
  const double c = ox * ox + oy * oy - p.radius_m * p.radius_m;
  if (a < 1e-15) {
    if (c > 0.0) return false;
    t0 = 0.0;
    t1 = max_range;
    return true;
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  t0 = std::max(0.0, (-b - s) / (2.0 * a));
  t1 = std::min(max_range, (-b + s) / (2.0 * a));
  return t0 < t1;
}

std::optional<double> box_hit(const Box& box, const Vector3& o, const Vector3& d, double max_range) {
  double t_near = 0.0;
  double t_far = max_range;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < box.min_corner[k] || o[k] > box.max_corner[k]) return std::nullopt;
      continue;
    }
    double ta = (box.min_corner[k] - o[k]) / d[k];
    double tb = (box.max_corner[k] - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t_near = std::max(t_near, ta);
    t_far = std::min(t_far, tb);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_near <= 0.0) return std::nullopt;  // origin inside or box behind
  return t_near;
}

double box_distance(const Box& box, const Vector3& p) {
  const Vector3 below = box.min_corner - p;
  const Vector3 above = p - box.max_corner;
  const Vector3 outside = below.cwiseMax(above).cwiseMax(0.0);
  if (outside.squaredNorm() > 0.0) return outside.norm();
  return std::min((p - box.min_corner).minCoeff(), (box.max_corner - p).minCoeff());
}

Matrix3 ypr_matrix(double yaw_deg, double pitch_deg, double roll_deg) {
  return (Eigen::AngleAxisd(deg2rad(yaw_deg), Vector3::UnitZ()) *
          Eigen::AngleAxisd(deg2rad(pitch_deg), Vector3::UnitY()) *
          Eigen::AngleAxisd(deg2rad(roll_deg), Vector3::UnitX()))
      .toRotationMatrix();
}

RigidTransform mount(double x, double y, double z, double yaw, double pitch, double roll) {
  return RigidTransform(Eigen::Quaterniond(ypr_matrix(yaw, pitch, roll)), Vector3(x, y, z));
}

std::string format_time(double t) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", t);
  return buf;
}

}  // namespace

double TerrainPatch::height(double x, double y) const {
  const double r = std::hypot(x - center_x, y - center_y);
  const double w = window(r, radius_m);
  if (w == 0.0) return 0.0;
  if (kind == TerrainKind::kHill) return amplitude_m * w;
  const double k = 2.0 * kPi / wavelength_m;
  return amplitude_m * w * std::sin(k * x) * std::sin(k * y);
}

double World::ground_height(double x, double y) const {
  double h = 0.0;
  for (const TerrainPatch& p : terrain) h += p.height(x, y);
  return h;
}

std::optional<double> World::cast(const Vector3& o, const Vector3& d, double max_range) const {
  double best = std::numeric_limits<double>::infinity();

  auto inside_any_disc = [&](double x, double y) {
    for (const TerrainPatch& p : terrain) {
      if (std::hypot(x - p.center_x, y - p.center_y) < p.radius_m) return true;
    }
    return false;
  };

  if (d.z() < 0.0 && o.z() > 0.0) {
    const double t = -o.z() / d.z();
    const Vector3 hit = o + t * d;
    if (t <= max_range && !inside_any_disc(hit.x(), hit.y())) best = t;
  }

  auto f = [&](double t) {
    const Vector3 q = o + t * d;
    return q.z() - ground_height(q.x(), q.y());
  };
  for (const TerrainPatch& p : terrain) {
    double t0 = 0.0;
    double t1 = 0.0;
    if (!disc_interval(p, o, d, std::min(max_range, best), t0, t1)) continue;
    double prev_t = t0;
    double prev_f = f(t0);
    if (prev_f <= 0.0) continue;  // entered below the surface: hit found elsewhere
    for (double t = t0 + kMarchStep;; t += kMarchStep) {
      const double tt = std::min(t, t1);
      const double ft = f(tt);
      if (ft <= 0.0) {
        double lo = prev_t;
        double hi = tt;
        for (int it = 0; it < kBisections && hi - lo > 1e-13; ++it) {
          const double mid = 0.5 * (lo + hi);
          (f(mid) > 0.0 ? lo : hi) = mid;
        }
        best = std::min(best, 0.5 * (lo + hi));
        break;
      }
      prev_t = tt;
      prev_f = ft;
      if (tt >= t1) break;
    }
  }

  for (const Box& b : boxes) {
    if (auto t = box_hit(b, o, d, max_range)) best = std::min(best, *t);
  }
  if (!std::isfinite(best) || best > max_range) return std::nullopt;
  return best;
}

double World::surface_residual(const Vector3& p) const {
  double r = std::abs(p.z() - ground_height(p.x(), p.y()));
  for (const Box& b : boxes) r = std::min(r, std::abs(box_distance(b, p)));
  return r;
}

bool World::on_obstacle(const Vector3& p, double tol) const {
  for (const Box& b : boxes) {
    if (std::abs(box_distance(b, p)) <= tol) return true;
  }
  return false;
}

World default_world(double a, double b) {
  World w;
  const double half_b = 0.5 * b;
  w.terrain.push_back({TerrainKind::kBumpy, 0.0, half_b + 4.0, 4.0, 0.12, 1.3});
  w.terrain.push_back({TerrainKind::kHill, 0.0, -half_b - 4.0, 4.0, 0.5, 1.0});

  auto add = [&](double cx, double cy, double sx, double sy, double h) {
    w.boxes.push_back({Vector3(cx - 0.5 * sx, cy - 0.5 * sy, -0.2), Vector3(cx + 0.5 * sx, cy + 0.5 * sy, h)});
  };
  // Inside the lobes.
  add(0.7 * a, 0.0, 1.5, 1.5, 1.2);
  add(-0.7 * a, 0.3, 1.2, 2.0, 1.6);
  // Around the path.
  add(a + 5.0, 4.0, 2.0, 3.0, 2.5);
  add(a + 4.0, -5.0, 3.0, 1.5, 1.8);
  add(-a - 5.0, -3.5, 2.5, 2.5, 3.0);
  add(-a - 4.5, 5.5, 1.0, 4.0, 2.2);
  add(0.6 * a, half_b + 5.5, 3.0, 1.2, 2.0);
  add(-0.6 * a, -half_b - 5.0, 2.0, 2.0, 2.6);
  add(-0.5 * a, half_b + 6.5, 0.6, 0.6, 4.0);
  add(0.5 * a, -half_b - 6.0, 0.6, 0.6, 4.0);
  add(a + 9.0, 11.0, 4.0, 0.5, 3.0);
  add(-a - 8.0, -11.0, 0.5, 5.0, 3.5);
  // Long walls bounding the site.
  add(a + 13.0, 0.0, 0.4, 2.0 * b + 6.0, 3.5);
  add(-a - 13.0, 1.0, 0.4, 2.0 * b, 4.0);
  add(0.0, b + 3.0, 2.0 * a + 10.0, 0.4, 3.0);
  add(1.5, -b - 3.0, 2.0 * a + 6.0, 0.4, 3.8);
  return w;
}

std::vector<Vector3> LidarModel::directions() const {
  std::vector<Vector3> dirs;
  if (kind == LidarKind::kSpinning) {
    const double step = 360.0 / azimuth_steps;
    const int cols = column_count();
    dirs.reserve(static_cast<std::size_t>(cols) * channels);
    for (int c = 0; c < cols; ++c) {
      const double az = deg2rad(-0.5 * horizontal_fov_deg + c * step);
      for (int ch = 0; ch < channels; ++ch) {
        const double el =
            deg2rad(channels == 1 ? 0.0 : -0.5 * vertical_fov_deg + ch * vertical_fov_deg / (channels - 1));
        dirs.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      }
    }
    return dirs;
  }
  const double half = deg2rad(0.5 * horizontal_fov_deg);
  constexpr double kPetals = 41.0;
  constexpr double kTurns = 3.0;
  dirs.reserve(rosette_points);
  for (int i = 0; i < rosette_points; ++i) {
    const double u = 2.0 * kPi * i / rosette_points;
    const double rho = half * std::abs(std::sin(kPetals * u));
    const double psi = kTurns * u;
    dirs.emplace_back(std::cos(rho), std::sin(rho) * std::cos(psi), std::sin(rho) * std::sin(psi));
  }
  return dirs;
}

int LidarModel::column_count() const {
  if (kind != LidarKind::kSpinning) return 1;
  const double step = 360.0 / azimuth_steps;
  return std::min(azimuth_steps, static_cast<int>(std::floor(horizontal_fov_deg / step + 1e-9)) + 1);
}

std::vector<int> LidarModel::columns() const {
  std::vector<int> cols;
  if (kind != LidarKind::kSpinning) {
    cols.assign(static_cast<std::size_t>(rosette_points), 0);
    return cols;
  }
  for (int c = 0; c < column_count(); ++c) cols.insert(cols.end(), channels, c);
  return cols;
}

std::string LidarModel::describe() const {
  char buf[160];
  if (kind == LidarKind::kSpinning) {
    std::snprintf(buf, sizeof(buf), "spinning channels=%d azimuth_steps=%d hfov_deg=%g vfov_deg=%g range_m=%g",
                  channels, azimuth_steps, horizontal_fov_deg, vertical_fov_deg, max_range_m);
  } else {
    std::snprintf(buf, sizeof(buf), "solid_state points=%d fov_deg=%g range_m=%g", rosette_points,
                  horizontal_fov_deg, max_range_m);
  }
  return buf;
}

LidarModel spinning_lidar() { return LidarModel{}; }

LidarModel rosette_lidar(double fov_deg) {
  LidarModel m;
  m.kind = LidarKind::kSolidState;
  m.horizontal_fov_deg = fov_deg;
  m.vertical_fov_deg = fov_deg;
  m.max_range_m = 80.0;
  return m;
}

SimConfig two_sensor_config(std::uint64_t seed) {
  SimConfig c;
  c.seed = seed;
  c.amplitude_a_m = 10.0;
  c.amplitude_b_m = 14.0;
  c.duration_s = 30.0;
  c.sensors.push_back({"L0", true, spinning_lidar(), mount(0.8, 0.0, 0.9, 5.0, 2.0, -1.0)});
  c.sensors.push_back({"L1", false, rosette_lidar(), mount(-1.6, 0.3, 0.5, 178.0, 8.0, 0.0)});
  return c;
}

SimConfig five_sensor_config(std::uint64_t seed) {
  SimConfig c = two_sensor_config(seed);
  c.sensors.push_back({"L2", false, rosette_lidar(), mount(0.2, 0.9, 0.4, 90.0, 10.0, 0.0)});
  c.sensors.push_back({"L3", false, rosette_lidar(), mount(0.2, -0.9, 0.4, -92.0, 12.0, 2.0)});
  LidarModel rear = spinning_lidar();
  c.sensors.push_back({"L4", false, rear, mount(-1.2, 0.0, 1.1, 180.0, 3.0, 1.5)});
  return c;
}

void set_noise(SimConfig& config, double range_sigma_m, double gins_pos_m, double gins_rot_deg) {
  for (SensorSpec& s : config.sensors) s.model.range_noise_m = range_sigma_m;
  config.gins_sigma_pos_m = gins_pos_m;
  config.gins_sigma_rot_deg = gins_rot_deg;
}

RigidTransform trajectory_pose(const SimConfig& config, double t) {
  const double a = config.amplitude_a_m;
  const double b = config.amplitude_b_m;
  const double th = 2.0 * kPi * t / config.duration_s;
  const double x = a * std::sin(th);
  const double y = b * std::sin(th) * std::cos(th);
  const double yaw = std::atan2(b * std::cos(2.0 * th), a * std::cos(th));
  double pitch = 0.0;
  double roll = 0.0;
  if (config.ripple_deg != 0.0) {
    const double w = 2.0 * kPi * t / config.ripple_period_s;
    pitch = config.ripple_deg * std::sin(w);
    roll = config.ripple_deg * std::cos(1.3 * w);
  }
  return RigidTransform(Eigen::Quaterniond(ypr_matrix(rad2deg(yaw), pitch, roll)), Vector3(x, y, config.h_g_m));
}

Trajectory generate_trajectory(const SimConfig& config) {
  if (config.amplitude_a_m <= 0.0 || config.amplitude_b_m <= 0.0 || config.duration_s <= 0.0 ||
      config.gins_rate_hz <= 0.0) {
    throw CalibError(ErrorCode::kConfigError, "trajectory amplitudes, duration and rate must be positive");
  }
  const auto n = static_cast<std::size_t>(std::floor(config.duration_s * config.gins_rate_hz + 1e-9));
  std::vector<TimedPose> poses;
  poses.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / config.gins_rate_hz;
    poses.push_back({t, trajectory_pose(config, t)});
  }
  return Trajectory(std::move(poses));
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t sensor, std::uint64_t scan) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sensor), static_cast<std::uint32_t>(scan)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Trajectory gins_measurements(const SimConfig& config, const Trajectory& truth) {
  if (config.gins_sigma_pos_m == 0.0 && config.gins_sigma_rot_deg == 0.0) return truth;
  std::mt19937_64 rng(stream_seed(config.seed, 0xFFFFFFFFu, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Matrix<double, 6, 1> sigma;
  sigma << Vector3::Constant(deg2rad(config.gins_sigma_rot_deg)), Vector3::Constant(config.gins_sigma_pos_m);
  Eigen::Matrix<double, 6, 1> e;
  for (int k = 0; k < 6; ++k) e[k] = sigma[k] * normal(rng);
  std::vector<TimedPose> out;
  out.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (i > 0) {
      const double dt = truth[i].time - truth[i - 1].time;
      const double phi = std::exp(-dt / config.gins_noise_corr_s);
      const double q = std::sqrt(1.0 - phi * phi);
      for (int k = 0; k < 6; ++k) e[k] = phi * e[k] + q * sigma[k] * normal(rng);
    }
    const RigidTransform& p = truth[i].pose;
    const Eigen::Quaterniond r = (p.rotation() * so3_exp(e.head<3>())).normalized();
    out.push_back({truth[i].time, RigidTransform(r, p.translation() + e.tail<3>())});
  }
  return Trajectory(std::move(out));
}

std::vector<double> scan_times(const SimConfig& config) {
  std::vector<double> times;
  for (std::size_t k = 1;; ++k) {
    const double t = static_cast<double>(k) / config.scan_rate_hz;
    if (t > config.duration_s + 1e-9) break;
    if (t - config.scan_period_s < -1e-12) continue;
    times.push_back(t);
  }
  return times;
}

PointCloud simulate_scan(const World& world, const LidarModel& model, const RigidTransform& pose,
                         std::uint64_t noise_seed) {
  PointCloud c = simulate_scan(world, model, pose, pose, 0.1, noise_seed);
  c.per_point_time.clear();
  return c;
}

PointCloud simulate_scan(const World& world, const LidarModel& model, const RigidTransform& pose_start,
                         const RigidTransform& pose_end, double period, std::uint64_t noise_seed) {
  const std::vector<Vector3> dirs = model.directions();
  const std::vector<int> cols = model.columns();
  const int ncols = model.column_count();
  const bool timed = model.kind == LidarKind::kSpinning;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  PointCloud cloud;
  int current_col = -1;
  RigidTransform pose = pose_end;
  double tau = 0.0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (timed && cols[i] != current_col) {
      current_col = cols[i];
      tau = ncols > 1 ? -period + period * current_col / (ncols - 1) : 0.0;
      pose = interpolate_pose({-period, pose_start}, {0.0, pose_end}, tau);
    }
    const Vector3 d_world = pose.rotation() * dirs[i];
    const auto range = world.cast(pose.translation(), d_world, model.max_range_m);
    // Draw noise for every ray so the stream does not depend on hit pattern.
    const double noise = model.range_noise_m > 0.0 ? model.range_noise_m * normal(rng) : 0.0;
    if (!range) continue;
    const double r = *range + noise;
    if (r <= 0.0) continue;
    cloud.points.push_back(r * dirs[i]);
    if (timed) cloud.per_point_time.push_back(tau);
  }
  return cloud;
}

DatasetLayout write_dataset(const World& world, const SimConfig& config, const fs::path& dir, int threads) {
  if (config.sensors.empty()) throw CalibError(ErrorCode::kConfigError, "simulation needs at least one sensor");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CalibError(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  const Trajectory truth = generate_trajectory(config);
  const Trajectory measured = gins_measurements(config, truth);
  write_pose_file(dir / "gins_poses_gt.txt", truth.poses());
  write_pose_file(dir / "gins_poses.txt", measured.poses());

  std::vector<SensorInfo> infos;
  NamedTransforms gt;
  for (const SensorSpec& s : config.sensors) {
    infos.push_back({s.id, s.base, s.model.describe()});
    gt.emplace_back(s.id, s.t_g_l);
  }
  write_sensors(dir / "sensors.txt", infos);
  write_extrinsics(dir / "gt_extrinsics.txt", gt);

  const std::vector<double> times = scan_times(config);
  struct Job {
    std::size_t sensor;
    std::size_t scan;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < config.sensors.size(); ++s) {
    fs::create_directories(dir / ("lidar_" + config.sensors[s].id), ec);
    if (ec) throw CalibError(ErrorCode::kIoError, "cannot create sensor directory: " + ec.message());
    for (std::size_t k = 0; k < times.size(); ++k) jobs.push_back({s, k});
  }
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const SensorSpec& s = config.sensors[jobs[j].sensor];
    const double t = times[jobs[j].scan];
    const RigidTransform end = trajectory_pose(config, t) * s.t_g_l;
    const RigidTransform start = trajectory_pose(config, t - config.scan_period_s) * s.t_g_l;
    const std::uint64_t seed = stream_seed(config.seed, jobs[j].sensor, jobs[j].scan);
    PointCloud cloud = s.model.kind == LidarKind::kSpinning
                           ? simulate_scan(world, s.model, start, end, config.scan_period_s, seed)
                           : simulate_scan(world, s.model, end, seed);
    cloud.timestamp = t;
    cloud.sensor_id = s.id;
    write_pcd(dir / ("lidar_" + s.id) / (format_time(t) + ".pcd"), cloud);
  });

  std::ofstream meta(dir / "meta.txt", std::ios::binary | std::ios::trunc);
  if (!meta) throw CalibError(ErrorCode::kIoError, "cannot write meta.txt");
  char buf[128];
  auto kv = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    meta << buf;
  };
  meta << "seed = " << config.seed << '\n';
  kv("amplitude_a_m", config.amplitude_a_m);
  kv("amplitude_b_m", config.amplitude_b_m);
  kv("duration_s", config.duration_s);
  kv("gins_rate_hz", config.gins_rate_hz);
  kv("scan_rate_hz", config.scan_rate_hz);
  kv("scan_period_s", config.scan_period_s);
  kv("h_g_m", config.h_g_m);
  kv("ripple_deg", config.ripple_deg);
  kv("ripple_period_s", config.ripple_period_s);
  kv("gins_sigma_pos_m", config.gins_sigma_pos_m);
  kv("gins_sigma_rot_deg", config.gins_sigma_rot_deg);
  kv("gins_noise_corr_s", config.gins_noise_corr_s);
  for (const SensorSpec& s : config.sensors) {
    std::snprintf(buf, sizeof(buf), "sensor_%s_range_noise_m = %.17g\n", s.id.c_str(), s.model.range_noise_m);
    meta << buf;
  }
  return {dir, times.size(), truth.size()};
}

}  // namespace lgcalib::sim
