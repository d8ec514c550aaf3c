#include "lgcalib/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace lgcalib {

namespace {

inline bool closer(double d2, std::size_t idx, double best2, std::size_t best_idx) {
  return d2 < best2 || (d2 == best2 && idx < best_idx);
}

struct HeapEntry {
  double d2;
  std::size_t index;
  bool operator<(const HeapEntry& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};

}  // namespace

KdTree::KdTree(std::span<const Vector3> points, std::size_t leaf_size)
    : leaf_size_(std::max<std::size_t>(1, leaf_size)), original_(points.begin(), points.end()) {
  indices_.resize(original_.size());
  std::iota(indices_.begin(), indices_.end(), 0u);
  if (!original_.empty()) {
    nodes_.reserve(2 * original_.size() / leaf_size_ + 2);
    build(0, static_cast<std::uint32_t>(original_.size()));
  }
  points_.resize(original_.size());
  for (std::size_t i = 0; i < indices_.size(); ++i) points_[i] = original_[indices_[i]];
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end, -1, -1, 0, 0.0});
  if (end - begin <= leaf_size_) return id;

  Vector3 lo = Vector3::Constant(std::numeric_limits<double>::infinity());
  Vector3 hi = -lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(original_[indices_[i]]);
    hi = hi.cwiseMax(original_[indices_[i]]);
  }
  int dim = 0;
  (hi - lo).maxCoeff(&dim);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(indices_.begin() + begin, indices_.begin() + mid, indices_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double va = original_[a][dim];
                     const double vb = original_[b][dim];
                     return va < vb || (va == vb && a < b);
                   });
  const double split = original_[indices_[mid]][dim];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].dim = dim;
  nodes_[id].split = split;
  return id;
}

template <class Accept>
void KdTree::nearest_impl(std::int32_t node_id, const Vector3& q, double limit2,
                          const Accept& accept, bool& found, double& best2,
                          std::size_t& best_index) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const double d2 = (points_[i] - q).squaredNorm();
      if (d2 > limit2) continue;
      const std::size_t idx = indices_[i];
      if (found && !closer(d2, idx, best2, best_index)) continue;
      if (!accept(idx)) continue;
      found = true;
      best2 = d2;
      best_index = idx;
    }
    return;
  }
  const double diff = q[node.dim] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  nearest_impl(near, q, limit2, accept, found, best2, best_index);
  const double bound = found ? best2 : limit2;
  if (diff * diff <= bound) nearest_impl(far, q, limit2, accept, found, best2, best_index);
}

std::optional<Neighbor> KdTree::nearest(const Vector3& query, double max_dist) const {
  if (nodes_.empty() || max_dist < 0.0) return std::nullopt;
  bool found = false;
  double best2 = 0.0;
  std::size_t best_index = 0;
  nearest_impl(0, query, max_dist * max_dist, [](std::size_t) { return true; }, found, best2,
               best_index);
  if (!found) return std::nullopt;
  return Neighbor{best_index, std::sqrt(best2)};
}

std::optional<Neighbor> KdTree::nearest_if(const Vector3& query, double max_dist,
                                           const std::function<bool(std::size_t)>& accept) const {
  if (nodes_.empty() || max_dist < 0.0) return std::nullopt;
  bool found = false;
  double best2 = 0.0;
  std::size_t best_index = 0;
  nearest_impl(0, query, max_dist * max_dist, accept, found, best2, best_index);
  if (!found) return std::nullopt;
  return Neighbor{best_index, std::sqrt(best2)};
}

std::vector<Neighbor> KdTree::knn(const Vector3& query, std::size_t k) const {
  std::vector<Neighbor> out;
  if (nodes_.empty() || k == 0) return out;
  std::priority_queue<HeapEntry> heap;  // max-heap on (d2, index)
  // Depth-first with near-child first; bounds checked against the current k-th.
  auto visit = [&](auto&& self, std::int32_t node_id) -> void {
    const Node& node = nodes_[node_id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const HeapEntry e{(points_[i] - query).squaredNorm(), indices_[i]};
        if (heap.size() < k) {
          heap.push(e);
        } else if (e < heap.top()) {
          heap.pop();
          heap.push(e);
        }
      }
      return;
    }
    const double diff = query[node.dim] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().d2) self(self, far);
  };
  visit(visit, 0);
  out.resize(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = Neighbor{heap.top().index, std::sqrt(heap.top().d2)};
    heap.pop();
  }
  return out;
}

std::vector<std::size_t> KdTree::radius_search(const Vector3& query, double radius) const {
  std::vector<std::size_t> out;
  if (nodes_.empty() || radius < 0.0) return out;
  const double r2 = radius * radius;
  auto visit = [&](auto&& self, std::int32_t node_id) -> void {
    const Node& node = nodes_[node_id];
    if (node.left < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        if ((points_[i] - query).squaredNorm() <= r2) out.push_back(indices_[i]);
      }
      return;
    }
    const double diff = query[node.dim] - node.split;
    if (diff < 0.0) {
      self(self, node.left);
      if (diff * diff <= r2) self(self, node.right);
    } else {
      self(self, node.right);
      if (diff * diff <= r2) self(self, node.left);
    }
  };
  visit(visit, 0);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lgcalib
