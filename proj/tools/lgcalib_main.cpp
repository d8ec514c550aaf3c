#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lgcalib/dataset.hpp"
#include "lgcalib/error.hpp"
#include "lgcalib/jacobian_suite.hpp"
#include "lgcalib/keyframes.hpp"
#include "lgcalib/metrics.hpp"
#include "lgcalib/pcd_io.hpp"
#include "lgcalib/pipeline.hpp"
#include "lgcalib/simgen.hpp"

namespace {

using namespace lgcalib;

constexpr int kExitUsage = 2;
constexpr int kExitDataset = 3;
constexpr int kExitNumerical = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError: return kExitUsage;
    case ErrorCode::kDatasetError:
    case ErrorCode::kIoError:
    case ErrorCode::kParseError: return kExitDataset;
    default: return kExitNumerical;
  }
}

// A flat key table shared by the config file and the command-line flags:
// every key is also a --key option, and flags win over the file.
template <typename Config>
struct KeyTable {
  struct Entry {
    std::string name, unit, help;
    std::function<std::string(const Config&)> get;
    std::function<void(Config&, const std::string&)> set;
  };
  std::vector<Entry> entries;

  const Entry* find(const std::string& name) const {
    for (const Entry& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
};

template <typename Config>
class KeyedCommand {
 public:
  KeyedCommand(CLI::App* cmd, const KeyTable<Config>& table, const Config& defaults) : table_(table) {
    cmd->add_option("--config", config_path_, "file of 'key = value' lines; flags override it");
    for (const auto& e : table_.entries) {
      std::string desc = e.help + " [" + (e.unit.empty() ? "" : e.unit + ", ") + "default " + e.get(defaults) + "]";
      cmd->add_option("--" + e.name, flags_[e.name], desc)->type_name("");
    }
  }

  /// Applies the config file, then the flags given on the command line.
  void apply(Config& config) const {
    if (!config_path_.empty()) {
      for (const auto& [k, v] : read_key_values(config_path_)) set(config, k, v);
    }
    for (const auto& e : table_.entries) {
      const auto it = flags_.find(e.name);
      if (it != flags_.end() && !it->second.empty()) e.set(config, it->second);
    }
  }

 private:
  void set(Config& config, const std::string& key, const std::string& value) const {
    const auto* e = table_.find(key);
    if (!e) throw CalibError(ErrorCode::kConfigError, "unknown key '" + key + "'");
    e->set(config, value);
  }

  const KeyTable<Config>& table_;
  std::string config_path_;
  std::map<std::string, std::string> flags_;
};

KeyTable<PipelineConfig> pipeline_table() {
  KeyTable<PipelineConfig> t;
  for (const ConfigKey& k : config_keys()) t.entries.push_back({k.name, k.unit, k.help, k.get, k.set});
  return t;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw CalibError(ErrorCode::kConfigError, "key '" + key + "': cannot parse '" + v + "' as a number");
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used == v.size() && v.find('-') == std::string::npos) return n;
  } catch (const std::exception&) {
  }
  throw CalibError(ErrorCode::kConfigError, "key '" + key + "': cannot parse '" + v + "' as an unsigned integer");
}

// --- simulate ---------------------------------------------------------------

struct SimulateConfig {
  std::string out;
  std::string preset = "two";
  std::uint64_t seed = 7;
  double duration_s = 30.0;
  double amplitude_a_m = 10.0;
  double amplitude_b_m = 14.0;
  double h_g_m = 1.8;
  double ripple_deg = 0.0;
  double range_noise_m = 0.0;
  double gins_pos_m = 0.0;
  double gins_rot_deg = 0.0;
  int threads = 1;
};

KeyTable<SimulateConfig> simulate_table() {
  using C = SimulateConfig;
  KeyTable<C> t;
  auto num = [&t](const char* name, const char* unit, const char* help, double C::*m) {
    t.entries.push_back({name, unit, help, [m](const C& c) { return format_number(c.*m); },
                         [m, name](C& c, const std::string& v) { c.*m = parse_double(name, v); }});
  };
  t.entries.push_back({"out", "", "output directory", [](const C& c) { return c.out; },
                       [](C& c, const std::string& v) { c.out = v; }});
  t.entries.push_back({"preset", "", "sensor rig: two or five", [](const C& c) { return c.preset; },
                       [](C& c, const std::string& v) {
                         if (v != "two" && v != "five") {
                           throw CalibError(ErrorCode::kConfigError, "preset must be 'two' or 'five'");
                         }
                         c.preset = v;
                       }});
  t.entries.push_back({"seed", "", "random seed", [](const C& c) { return std::to_string(c.seed); },
                       [](C& c, const std::string& v) { c.seed = parse_unsigned("seed", v); }});
  num("duration_s", "s", "trajectory duration", &C::duration_s);
  num("amplitude_a_m", "m", "figure-eight x amplitude", &C::amplitude_a_m);
  num("amplitude_b_m", "m", "figure-eight y amplitude", &C::amplitude_b_m);
  num("h_g_m", "m", "GINS height above ground", &C::h_g_m);
  num("ripple_deg", "deg", "pitch/roll vibration amplitude", &C::ripple_deg);
  num("range_noise_m", "m", "range noise sigma of every sensor", &C::range_noise_m);
  num("gins_pos_m", "m", "GINS position noise sigma", &C::gins_pos_m);
  num("gins_rot_deg", "deg", "GINS rotation noise sigma", &C::gins_rot_deg);
  t.entries.push_back({"threads", "", "scan generation threads", [](const C& c) { return std::to_string(c.threads); },
                       [](C& c, const std::string& v) { c.threads = static_cast<int>(parse_unsigned("threads", v)); }});
  return t;
}

int run_simulate(const SimulateConfig& c) {
  if (c.out.empty()) throw CalibError(ErrorCode::kConfigError, "simulate needs --out");
  if (c.threads < 1) throw CalibError(ErrorCode::kConfigError, "threads must be at least 1");
  sim::SimConfig sc = c.preset == "five" ? sim::five_sensor_config(c.seed) : sim::two_sensor_config(c.seed);
  sc.duration_s = c.duration_s;
  sc.amplitude_a_m = c.amplitude_a_m;
  sc.amplitude_b_m = c.amplitude_b_m;
  sc.h_g_m = c.h_g_m;
  sc.ripple_deg = c.ripple_deg;
  sim::set_noise(sc, c.range_noise_m, c.gins_pos_m, c.gins_rot_deg);
  const sim::World world = sim::default_world(sc.amplitude_a_m, sc.amplitude_b_m);
  const sim::DatasetLayout layout = sim::write_dataset(world, sc, c.out, c.threads);
  std::printf("wrote %s: %zu sensors, %zu scans per sensor, %zu GINS samples\n", layout.root.string().c_str(),
              sc.sensors.size(), layout.scans_per_sensor, layout.gins_samples);
  return 0;
}

// --- calibrate --------------------------------------------------------------

int run_calibrate(const PipelineConfig& config) {
  const CalibrationReport report = run_pipeline(config);
  write_report(report, config.output_dir);
  std::cout << report.text();
  return 0;
}

// --- eval -------------------------------------------------------------------

struct EvalConfig {
  std::string map;
  std::string dataset;
  std::string extrinsics;
  double radius_m = 1.0;
  std::uint64_t min_neighbors = 10;
  std::uint64_t max_points = 0;
  double voxel_leaf_m = 0.3;
  double keyframe_dist_m = 2.0;
  double keyframe_angle_deg = 30.0;
  double scan_period_s = 0.1;
  int threads = 1;
};

KeyTable<EvalConfig> eval_table() {
  using C = EvalConfig;
  KeyTable<C> t;
  auto str = [&t](const char* name, const char* help, std::string C::*m) {
    t.entries.push_back({name, "", help, [m](const C& c) { return c.*m; },
                         [m](C& c, const std::string& v) { c.*m = v; }});
  };
  auto num = [&t](const char* name, const char* unit, const char* help, double C::*m) {
    t.entries.push_back({name, unit, help, [m](const C& c) { return format_number(c.*m); },
                         [m, name](C& c, const std::string& v) { c.*m = parse_double(name, v); }});
  };
  auto count = [&t](const char* name, const char* help, std::uint64_t C::*m) {
    t.entries.push_back({name, "", help, [m](const C& c) { return std::to_string(c.*m); },
                         [m, name](C& c, const std::string& v) { c.*m = parse_unsigned(name, v); }});
  };
  str("map", "PCD map to evaluate", &C::map);
  str("dataset", "dataset to stitch a map from (with --extrinsics)", &C::dataset);
  str("extrinsics", "T_G_<id> extrinsics file for --dataset", &C::extrinsics);
  num("radius", "m", "neighbourhood radius", &C::radius_m);
  count("min_neighbors", "minimum neighbours per evaluated point", &C::min_neighbors);
  count("max_points", "query point cap, 0 for every point", &C::max_points);
  num("voxel_leaf_m", "m", "voxel leaf for stitched maps", &C::voxel_leaf_m);
  num("keyframe_dist_m", "m", "keyframe distance threshold", &C::keyframe_dist_m);
  num("keyframe_angle_deg", "deg", "keyframe angle threshold", &C::keyframe_angle_deg);
  num("scan_period_s", "s", "scan period", &C::scan_period_s);
  t.entries.push_back({"threads", "", "worker threads", [](const C& c) { return std::to_string(c.threads); },
                       [](C& c, const std::string& v) { c.threads = static_cast<int>(parse_unsigned("threads", v)); }});
  return t;
}

int run_eval(const EvalConfig& c) {
  if (c.map.empty() == c.dataset.empty()) {
    throw CalibError(ErrorCode::kConfigError, "eval needs exactly one of --map or --dataset");
  }
  if (c.radius_m <= 0.0) throw CalibError(ErrorCode::kConfigError, "radius must be positive");
  std::vector<Vector3> map;
  if (!c.map.empty()) {
    const PointCloud cloud = read_pcd(c.map);
    map = cloud.points;
  } else {
    if (c.extrinsics.empty()) throw CalibError(ErrorCode::kConfigError, "--dataset needs --extrinsics");
    const Dataset ds = load_dataset(c.dataset);
    const KeyframeSet kf = load_keyframes(ds, {c.keyframe_dist_m, c.keyframe_angle_deg, c.scan_period_s});
    const NamedTransforms named = read_extrinsics(c.extrinsics);
    std::vector<RigidTransform> ext;
    for (const std::string& id : kf.sensor_ids) {
      const auto t = find_transform(named, id);
      if (!t) throw CalibError(ErrorCode::kDatasetError, c.extrinsics + ": no extrinsic for sensor " + id);
      ext.push_back(*t);
    }
    map = stitch_map(kf, kf.gins, ext, c.voxel_leaf_m);
  }
  MetricOptions mo;
  mo.radius_m = c.radius_m;
  mo.min_neighbors = c.min_neighbors;
  mo.max_query_points = c.max_points;
  mo.threads = c.threads;
  const MapMetrics m = evaluate_map(map, mo);
  std::printf("points %zu\nradius_m %s\nmme_nat %s\nmpv_m %s\nevaluated %zu\nskipped %zu\n", map.size(),
              format_number(m.radius).c_str(), format_number(m.mme).c_str(), format_number(m.mpv).c_str(),
              m.n_points_evaluated, m.n_points_skipped);
  return 0;
}

// --- check ------------------------------------------------------------------

struct CheckConfig {
  std::uint64_t seed = 59;
  std::uint64_t configurations = 100;
  double step = 1e-6;
  double tolerance = 1e-5;
};

KeyTable<CheckConfig> check_table() {
  using C = CheckConfig;
  KeyTable<C> t;
  t.entries.push_back({"seed", "", "random seed", [](const C& c) { return std::to_string(c.seed); },
                       [](C& c, const std::string& v) { c.seed = parse_unsigned("seed", v); }});
  t.entries.push_back({"configurations", "", "random configurations per factor",
                       [](const C& c) { return std::to_string(c.configurations); },
                       [](C& c, const std::string& v) { c.configurations = parse_unsigned("configurations", v); }});
  t.entries.push_back({"step", "", "central difference step", [](const C& c) { return format_number(c.step); },
                       [](C& c, const std::string& v) { c.step = parse_double("step", v); }});
  t.entries.push_back({"tolerance", "", "maximum relative error", [](const C& c) { return format_number(c.tolerance); },
                       [](C& c, const std::string& v) { c.tolerance = parse_double("tolerance", v); }});
  return t;
}

int run_check(const CheckConfig& c) {
  if (c.configurations == 0 || c.step <= 0.0 || c.tolerance <= 0.0) {
    throw CalibError(ErrorCode::kConfigError, "configurations, step and tolerance must be positive");
  }
  bool ok = true;
  for (const JacobianCheck& r : run_jacobian_suite(c.seed, static_cast<int>(c.configurations), c.step)) {
    const bool pass = r.max_error < c.tolerance;
    ok = ok && pass;
    std::printf("%-20s %4d configs  max rel err %.3e  %s\n", r.factor.c_str(), r.configurations, r.max_error,
                pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targetless LiDAR-GINS and multi-LiDAR extrinsic calibration"};
  app.require_subcommand(1);

  const auto sim_keys = simulate_table();
  const auto pipe_keys = pipeline_table();
  const auto eval_keys = eval_table();
  const auto check_keys = check_table();

  CLI::App* simulate = app.add_subcommand("simulate", "write a synthetic dataset");
  KeyedCommand<SimulateConfig> sim_cmd(simulate, sim_keys, SimulateConfig{});
  CLI::App* calibrate = app.add_subcommand("calibrate", "run the calibration pipeline on a dataset");
  KeyedCommand<PipelineConfig> cal_cmd(calibrate, pipe_keys, PipelineConfig{});
  CLI::App* eval = app.add_subcommand("eval", "map entropy and plane variance of a map");
  KeyedCommand<EvalConfig> eval_cmd(eval, eval_keys, EvalConfig{});
  CLI::App* check = app.add_subcommand("check", "finite-difference check of every factor Jacobian");
  KeyedCommand<CheckConfig> check_cmd(check, check_keys, CheckConfig{});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*simulate) {
      SimulateConfig c;
      sim_cmd.apply(c);
      return run_simulate(c);
    }
    if (*calibrate) {
      PipelineConfig c;
      cal_cmd.apply(c);
      c.validate();
      return run_calibrate(c);
    }
    if (*eval) {
      EvalConfig c;
      eval_cmd.apply(c);
      return run_eval(c);
    }
    CheckConfig c;
    check_cmd.apply(c);
    return run_check(c);
  } catch (const CalibError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
