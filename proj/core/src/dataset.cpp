#include "lgcalib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lgcalib/error.hpp"

namespace lgcalib {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CalibError(ErrorCode::kDatasetError, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CalibError(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

// Calls fn(tokens, line_number) for every non-comment line.
template <typename Fn>
void for_each_record(const fs::path& path, Fn&& fn) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ss(t);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(tok);
    fn(tokens, number);
  }
}

double parse_double(const std::string& s, const fs::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0' || !std::isfinite(v)) {
    throw CalibError(ErrorCode::kDatasetError,
                     path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

RigidTransform parse_transform(const std::vector<std::string>& tok, std::size_t first,
                               const fs::path& path, std::size_t line) {
  double v[7];
  for (int i = 0; i < 7; ++i) v[i] = parse_double(tok[first + i], path, line);
  Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  if (q.norm() < 1e-9) {
    throw CalibError(ErrorCode::kDatasetError,
                     path.string() + ":" + std::to_string(line) + ": zero quaternion");
  }
  q.normalize();
  return RigidTransform(q, Vector3(v[0], v[1], v[2]));
}

}  // namespace

std::string format_transform(const RigidTransform& t) {
  const Vector3& p = t.translation();
  const Eigen::Quaterniond& q = t.rotation();
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g", p.x(), p.y(), p.z(),
                q.x(), q.y(), q.z(), q.w());
  return buf;
}

std::vector<TimedPose> read_pose_file(const fs::path& path) {
  std::vector<TimedPose> poses;
  for_each_record(path, [&](const std::vector<std::string>& tok, std::size_t line) {
    if (tok.size() != 8) {
      throw CalibError(ErrorCode::kDatasetError,
                       path.string() + ":" + std::to_string(line) + ": expected 8 fields");
    }
    poses.push_back({parse_double(tok[0], path, line), parse_transform(tok, 1, path, line)});
  });
  return poses;
}

void write_pose_file(const fs::path& path, const std::vector<TimedPose>& poses) {
  std::ofstream out = open_output(path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char stamp[64];
  for (const TimedPose& p : poses) {
    std::snprintf(stamp, sizeof(stamp), "%.6f", p.time);
    out << stamp << ' ' << format_transform(p.pose) << '\n';
  }
}

std::vector<SensorInfo> read_sensors(const fs::path& path) {
  std::vector<SensorInfo> sensors;
  for_each_record(path, [&](const std::vector<std::string>& tok, std::size_t line) {
    if (tok.size() < 2 || (tok[1] != "0" && tok[1] != "1")) {
      throw CalibError(ErrorCode::kDatasetError,
                       path.string() + ":" + std::to_string(line) + ": expected 'id base model'");
    }
    SensorInfo s{tok[0], tok[1] == "1", {}};
    for (std::size_t i = 2; i < tok.size(); ++i) s.model += (i > 2 ? " " : "") + tok[i];
    sensors.push_back(std::move(s));
  });
  return sensors;
}

void write_sensors(const fs::path& path, const std::vector<SensorInfo>& sensors) {
  std::ofstream out = open_output(path);
  out << "# id base model\n";
  for (const SensorInfo& s : sensors) out << s.id << ' ' << (s.base ? 1 : 0) << ' ' << s.model << '\n';
}

NamedTransforms read_extrinsics(const fs::path& path) {
  NamedTransforms list;
  for_each_record(path, [&](const std::vector<std::string>& tok, std::size_t line) {
    if (tok.size() != 8) {
      throw CalibError(ErrorCode::kDatasetError,
                       path.string() + ":" + std::to_string(line) + ": expected 8 fields");
    }
    list.emplace_back(tok[0], parse_transform(tok, 1, path, line));
  });
  return list;
}

void write_extrinsics(const fs::path& path, const NamedTransforms& extrinsics) {
  std::ofstream out = open_output(path);
  out << "# id tx ty tz qx qy qz qw (T_G_L)\n";
  for (const auto& [id, t] : extrinsics) out << id << ' ' << format_transform(t) << '\n';
}

std::optional<RigidTransform> find_transform(const NamedTransforms& list, const std::string& id) {
  for (const auto& [name, t] : list) {
    if (name == id) return t;
  }
  return std::nullopt;
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  if (!in) throw CalibError(ErrorCode::kConfigError, "cannot open " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw CalibError(ErrorCode::kConfigError,
                       path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

const SensorInfo& Dataset::base_sensor() const {
  for (const SensorInfo& s : sensors) {
    if (s.base) return s;
  }
  throw CalibError(ErrorCode::kDatasetError, "no base sensor in " + (root / "sensors.txt").string());
}

Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw CalibError(ErrorCode::kDatasetError, "not a directory: " + root.string());
  Dataset d;
  d.root = root;

  const fs::path gins = root / "gins_poses.txt";
  if (!fs::exists(gins)) throw CalibError(ErrorCode::kDatasetError, "missing " + gins.string());
  try {
    d.gins = Trajectory(read_pose_file(gins));
  } catch (const CalibError& e) {
    if (e.code() == ErrorCode::kDatasetError) throw;
    throw CalibError(ErrorCode::kDatasetError, gins.string() + ": " + e.what());
  }
  if (fs::exists(root / "gins_poses_gt.txt")) {
    d.gins_ground_truth = Trajectory(read_pose_file(root / "gins_poses_gt.txt"));
  }

  const fs::path sensors = root / "sensors.txt";
  if (!fs::exists(sensors)) throw CalibError(ErrorCode::kDatasetError, "missing " + sensors.string());
  d.sensors = read_sensors(sensors);
  if (std::count_if(d.sensors.begin(), d.sensors.end(), [](const SensorInfo& s) { return s.base; }) != 1) {
    throw CalibError(ErrorCode::kDatasetError, sensors.string() + ": exactly one base sensor required");
  }

  for (const SensorInfo& s : d.sensors) {
    const fs::path dir = root / ("lidar_" + s.id);
    if (!fs::is_directory(dir)) throw CalibError(ErrorCode::kDatasetError, "missing " + dir.string());
    std::vector<ScanFile>& files = d.scans[s.id];
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() != ".pcd") continue;
      const std::string stem = entry.path().stem().string();
      char* end = nullptr;
      const double stamp = std::strtod(stem.c_str(), &end);
      if (end == stem.c_str() || *end != '\0') {
        throw CalibError(ErrorCode::kDatasetError, "scan name is not a timestamp: " + entry.path().string());
      }
      files.push_back({stamp, entry.path()});
    }
    std::sort(files.begin(), files.end(), [](const ScanFile& a, const ScanFile& b) { return a.stamp < b.stamp; });
    if (files.empty()) throw CalibError(ErrorCode::kDatasetError, "no scans in " + dir.string());
  }

  if (fs::exists(root / "gt_extrinsics.txt")) d.ground_truth = read_extrinsics(root / "gt_extrinsics.txt");
  if (fs::exists(root / "meta.txt")) d.meta = read_key_values(root / "meta.txt");
  return d;
}

const ScanFile& find_scan(const Dataset& dataset, const std::string& sensor, double stamp) {
  const auto it = dataset.scans.find(sensor);
  if (it == dataset.scans.end() || it->second.empty()) {
    throw CalibError(ErrorCode::kDatasetError, "no scans for sensor " + sensor);
  }
  const std::vector<ScanFile>& files = it->second;
  auto pos = std::lower_bound(files.begin(), files.end(), stamp,
                              [](const ScanFile& f, double s) { return f.stamp < s; });
  const ScanFile* best = nullptr;
  if (pos != files.end()) best = &*pos;
  if (pos != files.begin()) {
    const ScanFile& prev = *std::prev(pos);
    if (best == nullptr || std::abs(prev.stamp - stamp) <= std::abs(best->stamp - stamp)) best = &prev;
  }
  if (std::abs(best->stamp - stamp) > 1e-3) {
    throw CalibError(ErrorCode::kDatasetError, "no scan of " + sensor + " near t=" + std::to_string(stamp));
  }
  return *best;
}

}  // namespace lgcalib
