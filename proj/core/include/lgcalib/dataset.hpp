#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lgcalib/point_cloud.hpp"
#include "lgcalib/trajectory.hpp"

namespace lgcalib {

// Pose files hold one pose per line: "timestamp tx ty tz qx qy qz qw".
// Lines starting with '#' and blank lines are ignored; quaternions are
// normalized on read.
std::vector<TimedPose> read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, const std::vector<TimedPose>& poses);

struct SensorInfo {
  std::string id;
  bool base = false;
  std::string model;  // free-form description, e.g. "spinning 16x900"
};

// sensors.txt: "id base model..." with base as 0/1.
std::vector<SensorInfo> read_sensors(const std::filesystem::path& path);
void write_sensors(const std::filesystem::path& path, const std::vector<SensorInfo>& sensors);

using NamedTransforms = std::vector<std::pair<std::string, RigidTransform>>;

// Extrinsic files: "id tx ty tz qx qy qz qw" per line.
NamedTransforms read_extrinsics(const std::filesystem::path& path);
void write_extrinsics(const std::filesystem::path& path, const NamedTransforms& extrinsics);
std::optional<RigidTransform> find_transform(const NamedTransforms& list, const std::string& id);

struct ScanFile {
  double stamp = 0.0;
  std::filesystem::path path;
};

struct Dataset {
  std::filesystem::path root;
  Trajectory gins;
  std::optional<Trajectory> gins_ground_truth;
  std::vector<SensorInfo> sensors;
  std::map<std::string, std::vector<ScanFile>> scans;  // sorted by stamp
  std::optional<NamedTransforms> ground_truth;
  std::map<std::string, std::string> meta;

  const SensorInfo& base_sensor() const;
};

/// Loads the directory index and trajectories; scans are read lazily.
/// Missing or malformed required files raise kDatasetError naming the file.
Dataset load_dataset(const std::filesystem::path& root);

/// Scan of `sensor` whose stamp is closest to `stamp` (within 1 ms).
const ScanFile& find_scan(const Dataset& dataset, const std::string& sensor, double stamp);

/// "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

std::string format_transform(const RigidTransform& t);

}  // namespace lgcalib
