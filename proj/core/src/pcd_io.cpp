#include "lgcalib/pcd_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lgcalib/error.hpp"

namespace lgcalib {

static_assert(std::endian::native == std::endian::little, "binary PCD assumes a little-endian host");

namespace {

struct Header {
  std::vector<std::string> fields;
  std::vector<std::string> types;
  std::vector<int> sizes;
  std::vector<int> counts;
  std::size_t width = 0;
  std::size_t height = 1;
  std::size_t points = 0;
  bool has_points = false;
  std::string data;
};

[[noreturn]] void parse_fail(const std::filesystem::path& path, const std::string& what) {
  throw CalibError(ErrorCode::kParseError, path.string() + ": " + what);
}

std::size_t to_size(const std::filesystem::path& path, const std::string& token) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(token, &used);
    if (used != token.size()) parse_fail(path, "bad integer '" + token + "'");
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    parse_fail(path, "bad integer '" + token + "'");
  }
}

Header read_header(std::istream& in, const std::filesystem::path& path) {
  Header h;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::vector<std::string> values;
    for (std::string v; ls >> v;) values.push_back(v);
    if (key == "VERSION") {
      continue;
    } else if (key == "FIELDS") {
      h.fields = values;
    } else if (key == "TYPE") {
      h.types = values;
    } else if (key == "SIZE") {
      for (const auto& v : values) h.sizes.push_back(static_cast<int>(to_size(path, v)));
    } else if (key == "COUNT") {
      for (const auto& v : values) h.counts.push_back(static_cast<int>(to_size(path, v)));
    } else if (key == "WIDTH") {
      if (values.size() != 1) parse_fail(path, "WIDTH expects one value");
      h.width = to_size(path, values[0]);
    } else if (key == "HEIGHT") {
      if (values.size() != 1) parse_fail(path, "HEIGHT expects one value");
      h.height = to_size(path, values[0]);
    } else if (key == "VIEWPOINT") {
      continue;
    } else if (key == "POINTS") {
      if (values.size() != 1) parse_fail(path, "POINTS expects one value");
      h.points = to_size(path, values[0]);
      h.has_points = true;
    } else if (key == "DATA") {
      if (values.size() != 1) parse_fail(path, "DATA expects one value");
      h.data = values[0];
      return h;
    } else {
      parse_fail(path, "unknown header key '" + key + "'");
    }
  }
  parse_fail(path, "missing DATA line");
}

}  // namespace

PointCloud read_pcd(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CalibError(ErrorCode::kIoError, "cannot open " + path.string());
  const Header h = read_header(in, path);

  const std::size_t nf = h.fields.size();
  if (nf == 0) parse_fail(path, "missing FIELDS");
  if (h.types.size() != nf || h.sizes.size() != nf) {
    parse_fail(path, "FIELDS, TYPE and SIZE disagree in length");
  }
  if (!h.counts.empty() && h.counts.size() != nf) parse_fail(path, "COUNT length mismatch");
  for (std::size_t f = 0; f < nf; ++f) {
    if (h.types[f] != "F" || h.sizes[f] != 4) {
      parse_fail(path, "field '" + h.fields[f] + "' is not a 4-byte float");
    }
    if (!h.counts.empty() && h.counts[f] != 1) parse_fail(path, "COUNT other than 1");
  }
  auto find = [&](const char* name) -> int {
    for (std::size_t f = 0; f < nf; ++f) {
      if (h.fields[f] == name) return static_cast<int>(f);
    }
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z"), it = find("time");
  if (ix < 0 || iy < 0 || iz < 0) parse_fail(path, "FIELDS must include x, y and z");
  if (h.height != 1) parse_fail(path, "organized clouds (HEIGHT != 1) are not supported");
  const std::size_t n = h.has_points ? h.points : h.width;
  if (h.width != n) parse_fail(path, "WIDTH and POINTS disagree");

  PointCloud cloud;
  cloud.points.resize(n);
  if (it >= 0) cloud.per_point_time.resize(n);
  std::vector<float> row(nf);

  if (h.data == "binary") {
    std::vector<char> buf(n * nf * sizeof(float));
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) parse_fail(path, "truncated payload");
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(row.data(), buf.data() + i * nf * sizeof(float), nf * sizeof(float));
      cloud.points[i] = Vector3(row[ix], row[iy], row[iz]);
      if (it >= 0) cloud.per_point_time[i] = row[it];
    }
  } else if (h.data == "ascii") {
    std::string line;
    std::size_t i = 0;
    while (i < n && std::getline(in, line)) {
      if (line.empty() || line == "\r") continue;
      std::istringstream ls(line);
      for (std::size_t f = 0; f < nf; ++f) {
        std::string tok;
        if (!(ls >> tok)) parse_fail(path, "short row " + std::to_string(i));
        try {
          row[f] = std::stof(tok);
        } catch (const std::logic_error&) {
          parse_fail(path, "bad number '" + tok + "'");
        }
      }
      cloud.points[i] = Vector3(row[ix], row[iy], row[iz]);
      if (it >= 0) cloud.per_point_time[i] = row[it];
      ++i;
    }
    if (i != n) parse_fail(path, "expected " + std::to_string(n) + " rows, got " + std::to_string(i));
  } else {
    parse_fail(path, "unsupported DATA '" + h.data + "'");
  }
  cloud.validate();
  return cloud;
}

void write_pcd(const std::filesystem::path& path, const PointCloud& cloud, PcdMode mode) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CalibError(ErrorCode::kIoError, "cannot write " + path.string());
  const bool timed = cloud.has_per_point_time();
  const std::size_t n = cloud.size();
  out << "# .PCD v0.7 - Point Cloud Data file format\n"
      << "VERSION .7\n"
      << (timed ? "FIELDS x y z time\nSIZE 4 4 4 4\nTYPE F F F F\nCOUNT 1 1 1 1\n"
                : "FIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n")
      << "WIDTH " << n << "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\n"
      << "POINTS " << n << "\n"
      << "DATA " << (mode == PcdMode::kBinary ? "binary" : "ascii") << "\n";
  const std::size_t nf = timed ? 4 : 3;
  if (mode == PcdMode::kBinary) {
    std::vector<float> buf(n * nf);
    for (std::size_t i = 0; i < n; ++i) {
      float* r = buf.data() + i * nf;
      r[0] = static_cast<float>(cloud.points[i].x());
      r[1] = static_cast<float>(cloud.points[i].y());
      r[2] = static_cast<float>(cloud.points[i].z());
      if (timed) r[3] = static_cast<float>(cloud.per_point_time[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    char line[128];
    for (std::size_t i = 0; i < n; ++i) {
      const Vector3& p = cloud.points[i];
      int len = std::snprintf(line, sizeof(line), "%.9g %.9g %.9g", static_cast<double>(static_cast<float>(p.x())),
                              static_cast<double>(static_cast<float>(p.y())),
                              static_cast<double>(static_cast<float>(p.z())));
      if (timed) {
        len += std::snprintf(line + len, sizeof(line) - static_cast<std::size_t>(len), " %.9g",
                             static_cast<double>(static_cast<float>(cloud.per_point_time[i])));
      }
      out.write(line, len);
      out.put('\n');
    }
  }
  if (!out) throw CalibError(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace lgcalib
