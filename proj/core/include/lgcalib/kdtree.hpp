#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lgcalib/se3.hpp"

namespace lgcalib {

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Static 3-D tree. Immutable after construction and safe to query from
/// several threads. Equal distances resolve to the lowest point index, so
/// results coincide with an exhaustive scan.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vector3> points, std::size_t leaf_size = 12);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  std::optional<Neighbor> nearest(const Vector3& query, double max_dist) const;

  /// Nearest point whose index passes `accept`.
  std::optional<Neighbor> nearest_if(const Vector3& query, double max_dist,
                                     const std::function<bool(std::size_t)>& accept) const;

  /// Up to k neighbors ordered by (distance, index).
  std::vector<Neighbor> knn(const Vector3& query, std::size_t k) const;

  /// Indices of all points within `radius` (inclusive), ascending.
  std::vector<std::size_t> radius_search(const Vector3& query, double radius) const;

  const Vector3& point(std::size_t original_index) const { return original_[original_index]; }

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int dim = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);

  template <class Accept>
  void nearest_impl(std::int32_t node, const Vector3& q, double limit2, const Accept& accept,
                    bool& found, double& best2, std::size_t& best_index) const;

  std::size_t leaf_size_ = 12;
  std::vector<Vector3> original_;
  std::vector<Vector3> points_;         // tree order
  std::vector<std::uint32_t> indices_;  // tree order -> original index
  std::vector<Node> nodes_;
};

}  // namespace lgcalib
