#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcad/point_cloud.hpp"

namespace pcad {

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

// Immutable KD-tree over a copy of the cloud's coordinates. Query results are
// ordered by (squared distance, index), so equidistant points come back with
// the lower index first and results match exhaustive search exactly.
class SpatialIndex {
 public:
  struct Node {
    int axis = -1;  // -1 for leaves
    double threshold = 0.0;
    std::uint32_t left = 0, right = 0;  // children (inner nodes)
    std::uint32_t begin = 0, end = 0;   // range into order_ (leaves)
  };

  explicit SpatialIndex(std::span<const Vec3> points, std::size_t leaf_size = 12)
      : points_(points.begin(), points.end()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    if (points_.empty()) throw EmptyCloudError("cannot index an empty cloud");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Vec3>& points() const noexcept { return points_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  // The k nearest points to `query`, ascending by distance (ties: lower index).
  IndexList knn(const Vec3& query, std::size_t k) const {
    std::vector<std::pair<double, Index>> found;
    knn_with_distances(query, k, found);
    IndexList out(found.size());
    for (std::size_t i = 0; i < found.size(); ++i) out[i] = found[i].second;
    return out;
  }

  // As knn(), but fills (squared distance, index) pairs; reuses `out`'s storage.
  void knn_with_distances(const Vec3& query, std::size_t k,
                          std::vector<std::pair<double, Index>>& out) const {
    if (k == 0 || k > points_.size())
      throw ArgumentError("knn: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(points_.size()) + "]");
    out.clear();
    out.reserve(k + 1);
    // max-heap on (d2, idx): front is the current worst candidate
    search_knn(0, query, k, out);
    std::sort_heap(out.begin(), out.end());
  }

  // All points with distance <= radius, ascending (ties: lower index).
  IndexList radius(const Vec3& query, double r) const {
    if (!(r >= 0.0)) throw ArgumentError("radius must be non-negative");
    std::vector<std::pair<double, Index>> found;
    search_radius(0, query, r * r, found);
    std::sort(found.begin(), found.end());
    IndexList out(found.size());
    for (std::size_t i = 0; i < found.size(); ++i) out[i] = found[i].second;
    return out;
  }

 private:
  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= leaf_size_) {
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (auto i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) {  // all coincident
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    const double threshold = points_[order_[mid]][axis];
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    auto& node = nodes_[id];
    node.axis = axis;
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  // Left subtree holds coordinates <= threshold, right holds >= threshold.
  void search_knn(std::uint32_t id, const Vec3& q, std::size_t k,
                  std::vector<std::pair<double, Index>>& heap) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const Index idx = order_[i];
        std::pair<double, Index> cand{squared_distance(q, points_[idx]), idx};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.threshold;
    const auto near = diff <= 0.0 ? node.left : node.right;
    const auto far = diff <= 0.0 ? node.right : node.left;
    search_knn(near, q, k, heap);
    // equality keeps the far side alive so that lower-index ties are found
    if (heap.size() < k || diff * diff <= heap.front().first) search_knn(far, q, k, heap);
  }

  void search_radius(std::uint32_t id, const Vec3& q, double r2,
                     std::vector<std::pair<double, Index>>& out) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const double d2 = squared_distance(q, points_[order_[i]]);
        if (d2 <= r2) out.emplace_back(d2, order_[i]);
      }
      return;
    }
    const double diff = q[node.axis] - node.threshold;
    if (diff <= 0.0 || diff * diff <= r2) search_radius(node.left, q, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) search_radius(node.right, q, r2, out);
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

inline SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex(cloud.points); }

// Mean distance from each point to its k nearest other points.
inline std::vector<double> mean_knn_distances(const PointCloud& cloud, const SpatialIndex& index,
                                              std::size_t k) {
  std::vector<double> out(cloud.size());
  std::vector<std::pair<double, Index>> found;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    index.knn_with_distances(cloud.points[i], k + 1, found);
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& [d2, j] : found) {
      if (j == i) continue;
      if (used == k) break;
      sum += std::sqrt(d2);
      ++used;
    }
    out[i] = sum / static_cast<double>(k);
  }
  return out;
}

}  // namespace pcad
