#include "lgcalib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Eigenvalues>

#include "lgcalib/error.hpp"
#include "lgcalib/kdtree.hpp"
#include "lgcalib/parallel.hpp"

namespace lgcalib {

double quantile_type7(std::vector<double>& values, double q) {
  if (values.empty()) throw CalibError(ErrorCode::kOutOfRange, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

template <class PerPoint>
MetricValue mean_over_queries(std::span<const Vector3> map, const MetricOptions& options, const char* name,
                              PerPoint per_point) {
  if (map.empty()) throw CalibError(ErrorCode::kNoEvaluablePoints, std::string(name) + ": empty map");
  const KdTree tree(map);
  std::size_t stride = 1;
  if (options.max_query_points > 0 && map.size() > options.max_query_points) {
    stride = (map.size() + options.max_query_points - 1) / options.max_query_points;
  }
  const std::size_t nq = (map.size() + stride - 1) / stride;
  std::vector<std::optional<double>> slots(nq);
  parallel_for(nq, options.threads, [&](std::size_t q) {
    const std::vector<std::size_t> nb = tree.radius_search(map[q * stride], options.radius_m);
    if (nb.size() < options.min_neighbors) return;
    slots[q] = per_point(nb);
  });
  MetricValue out;
  double sum = 0.0;
  for (const auto& s : slots) {
    if (!s) {
      ++out.skipped;
      continue;
    }
    sum += *s;
    ++out.evaluated;
  }
  if (out.evaluated == 0) {
    throw CalibError(ErrorCode::kNoEvaluablePoints,
                     std::string(name) + ": no point has " + std::to_string(options.min_neighbors) +
                         " neighbours within " + std::to_string(options.radius_m) + " m");
  }
  out.value = sum / static_cast<double>(out.evaluated);
  return out;
}

}  // namespace

MetricValue mean_map_entropy(std::span<const Vector3> map, const MetricOptions& options) {
  const double two_pi_e = 2.0 * std::numbers::pi * std::numbers::e;
  return mean_over_queries(map, options, "mean map entropy",
                           [&](const std::vector<std::size_t>& nb) -> std::optional<double> {
                             const double det = (two_pi_e * sample_covariance(map, nb)).determinant();
                             if (!(det >= 1e-30)) return std::nullopt;
                             return 0.5 * std::log(det);
                           });
}

MetricValue mean_plane_variance(std::span<const Vector3> map, const MetricOptions& options) {
  return mean_over_queries(map, options, "mean plane variance",
                           [&](const std::vector<std::size_t>& nb) -> std::optional<double> {
                             Vector3 mean = Vector3::Zero();
                             for (std::size_t i : nb) mean += map[i];
                             mean /= static_cast<double>(nb.size());
                             const Eigen::SelfAdjointEigenSolver<Matrix3> eig(sample_covariance(map, nb));
                             const Vector3 normal = eig.eigenvectors().col(0);
                             std::vector<double> dist;
                             dist.reserve(nb.size());
                             for (std::size_t i : nb) dist.push_back(std::abs(normal.dot(map[i] - mean)));
                             return quantile_type7(dist, 0.75);
                           });
}

MapMetrics evaluate_map(std::span<const Vector3> map, const MetricOptions& options) {
  const MetricValue mme = mean_map_entropy(map, options);
  const MetricValue mpv = mean_plane_variance(map, options);
  MapMetrics out;
  out.mme = mme.value;
  out.mpv = mpv.value;
  out.n_points_evaluated = mme.evaluated;
  out.n_points_skipped = mme.skipped;
  out.radius = options.radius_m;
  return out;
}

}  // namespace lgcalib
