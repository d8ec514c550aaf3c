#include "lgcalib/direct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "lgcalib/error.hpp"

namespace lgcalib {

namespace {

struct Rect {
  Eigen::VectorXd center;  // unit cube coordinates
  std::vector<int> level;  // side length along i is 3^-level[i]
  int splits = 0;
  double value = 0.0;
};

double rect_size(const Rect& r) {
  double s = 0.0;
  for (int l : r.level) s += std::pow(3.0, -2.0 * l);
  return 0.5 * std::sqrt(s);
}

}  // namespace

DirectResult direct_search(const std::function<double(const Eigen::VectorXd&)>& objective,
                           const SearchSpace& space, const DirectOptions& options) {
  const Eigen::Index n = space.lower.size();
  if (n == 0 || space.upper.size() != n || !(space.upper.array() > space.lower.array()).all()) {
    throw CalibError(ErrorCode::kOutOfRange, "search space needs lower < upper in every dimension");
  }
  const Eigen::VectorXd span = space.upper - space.lower;
  DirectResult result;

  auto evaluate = [&](const Eigen::VectorXd& unit) {
    const Eigen::VectorXd x = space.lower + span.cwiseProduct(unit);
    const double f = objective(x);
    ++result.evaluations;
    if (!std::isfinite(f)) throw CalibError(ErrorCode::kNonFiniteObjective, "objective is not finite");
    return f;
  };

  std::vector<Rect> rects;
  rects.push_back(Rect{Eigen::VectorXd::Constant(n, 0.5), std::vector<int>(n, 0), 0, 0.0});
  rects[0].value = evaluate(rects[0].center);
  std::size_t best = 0;

  for (int iter = 0; iter < options.iterations; ++iter) {
    if (result.evaluations >= space.max_evaluations) break;

    // Group representative: lowest value, then lowest index.
    std::map<int, std::size_t> group_min;
    for (std::size_t i = 0; i < rects.size(); ++i) {
      auto it = group_min.find(rects[i].splits);
      if (it == group_min.end() || rects[i].value < rects[it->second].value) group_min[rects[i].splits] = i;
    }
    // Larger split count means smaller rectangle; order candidates by size ascending.
    std::vector<std::size_t> cand;
    for (auto it = group_min.rbegin(); it != group_min.rend(); ++it) cand.push_back(it->second);
    std::vector<double> d(cand.size()), f(cand.size());
    for (std::size_t c = 0; c < cand.size(); ++c) {
      d[c] = rect_size(rects[cand[c]]);
      f[c] = rects[cand[c]].value;
    }
    const double fmin = rects[best].value;
    std::vector<std::size_t> selected;
    for (std::size_t j = 0; j < cand.size(); ++j) {
      double k_low = 0.0;
      double k_up = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < cand.size(); ++i) {
        if (i == j) continue;
        if (d[i] < d[j]) k_low = std::max(k_low, (f[j] - f[i]) / (d[j] - d[i]));
        if (d[i] > d[j]) k_up = std::min(k_up, (f[i] - f[j]) / (d[i] - d[j]));
      }
      if (k_low > k_up) continue;
      if (std::isfinite(k_up) && f[j] - k_up * d[j] > fmin - options.epsilon * std::abs(fmin)) continue;
      selected.push_back(cand[j]);
    }

    for (std::size_t r : selected) {
      const int min_level = *std::min_element(rects[r].level.begin(), rects[r].level.end());
      std::vector<int> dims;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (rects[r].level[static_cast<std::size_t>(i)] == min_level) dims.push_back(static_cast<int>(i));
      }
      if (result.evaluations + 2 * dims.size() > space.max_evaluations) break;
      const double delta = std::pow(3.0, -(min_level + 1));
      std::vector<double> fp(dims.size()), fm(dims.size()), w(dims.size());
      for (std::size_t k = 0; k < dims.size(); ++k) {
        Eigen::VectorXd cp = rects[r].center, cm = rects[r].center;
        cp[dims[k]] += delta;
        cm[dims[k]] -= delta;
        fp[k] = evaluate(cp);
        fm[k] = evaluate(cm);
        w[k] = std::min(fp[k], fm[k]);
      }
      std::vector<std::size_t> order(dims.size());
      std::iota(order.begin(), order.end(), 0u);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] < w[b]; });
      for (std::size_t k : order) {
        const int dim = dims[k];
        rects[r].level[static_cast<std::size_t>(dim)] += 1;
        rects[r].splits += 1;
        for (int sign : {+1, -1}) {
          Rect child = rects[r];
          child.center[dim] += sign * delta;
          child.value = sign > 0 ? fp[k] : fm[k];
          rects.push_back(child);
          if (child.value < rects[best].value) best = rects.size() - 1;
        }
      }
    }
    result.iterations = iter + 1;
  }

  result.argmin = space.lower + span.cwiseProduct(rects[best].center);
  result.value = rects[best].value;
  return result;
}

}  // namespace lgcalib
