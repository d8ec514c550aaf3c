#pragma once

#include <filesystem>

#include "lgcalib/point_cloud.hpp"

namespace lgcalib {

enum class PcdMode { kAscii, kBinary };

// Supported subset: VERSION .7, single-row (HEIGHT 1) clouds, FIELDS with x, y
// and z plus an optional `time`, all TYPE F SIZE 4 COUNT 1. Other float
// fields are skipped on read. Binary payloads are little-endian.
PointCloud read_pcd(const std::filesystem::path& path);

void write_pcd(const std::filesystem::path& path, const PointCloud& cloud,
               PcdMode mode = PcdMode::kBinary);

}  // namespace lgcalib
