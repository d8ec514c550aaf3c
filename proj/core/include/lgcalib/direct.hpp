#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Core>

namespace lgcalib {

struct SearchSpace {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::size_t max_evaluations = 20000;
};

struct DirectOptions {
  int iterations = 200;
  double epsilon = 1e-4;
};

struct DirectResult {
  Eigen::VectorXd argmin;
  double value = 0.0;
  std::size_t evaluations = 0;
  int iterations = 0;
};

/// Deterministic DIviding RECTangles search over a box. Potentially optimal
/// rectangles come from the lower convex hull of (size, value); among equal
/// sizes the lowest value, then the lowest creation index, is chosen.
/// Throws kNonFiniteObjective if the objective returns NaN or infinity.
DirectResult direct_search(const std::function<double(const Eigen::VectorXd&)>& objective,
                           const SearchSpace& space, const DirectOptions& options = {});

}  // namespace lgcalib
