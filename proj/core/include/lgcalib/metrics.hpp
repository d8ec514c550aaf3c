#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lgcalib/point_cloud.hpp"

namespace lgcalib {

struct MetricOptions {
  double radius_m = 1.0;
  std::size_t min_neighbors = 10;
  /// Query points are a stride subsample of the map capped at this count;
  /// neighbourhoods always use the full map. 0 evaluates every point.
  std::size_t max_query_points = 0;
  int threads = 1;
};

struct MetricValue {
  double value = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

struct MapMetrics {
  double mme = 0.0;  // nats
  double mpv = 0.0;  // meters
  std::size_t n_points_evaluated = 0;
  std::size_t n_points_skipped = 0;
  double radius = 0.0;
};

/// Mean of 0.5 * ln|2 pi e Sigma| over query points, Sigma being the sample
/// covariance of the neighbours within the radius. Points with too few
/// neighbours or det(Sigma) < 1e-30 are skipped. Throws kNoEvaluablePoints.
MetricValue mean_map_entropy(std::span<const Vector3> map, const MetricOptions& options = {});

/// Mean over query points of the upper quartile (linear interpolation between
/// order statistics) of |distance| from the neighbours to their least-squares
/// plane. Throws kNoEvaluablePoints.
MetricValue mean_plane_variance(std::span<const Vector3> map, const MetricOptions& options = {});

/// Both metrics. n_points_evaluated is the entropy count.
MapMetrics evaluate_map(std::span<const Vector3> map, const MetricOptions& options = {});

/// Quantile by linear interpolation between order statistics (type 7).
/// `values` is reordered.
double quantile_type7(std::vector<double>& values, double q);

}  // namespace lgcalib
