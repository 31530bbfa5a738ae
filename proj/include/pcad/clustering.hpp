#pragma once

#include <algorithm>
#include <vector>

#include "pcad/point_cloud.hpp"

namespace pcad {

// Recursive KD median splits along the axis of largest extent until every
// leaf holds at most `target_cluster_size` points. The leaves partition the
// index set; each returned list is sorted ascending.
inline std::vector<IndexList> cluster_points(const PointCloud& cloud, std::size_t target_cluster_size) {
  if (target_cluster_size < 1 || target_cluster_size > cloud.size())
    throw ArgumentError("cluster_points: target_cluster_size must lie in [1, cloud size]");

  IndexList order(cloud.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<IndexList> clusters;

  auto recurse = [&](auto&& self, std::size_t begin, std::size_t end) -> void {
    if (end - begin <= target_cluster_size) {
      IndexList c(order.begin() + begin, order.begin() + end);
      std::sort(c.begin(), c.end());
      clusters.push_back(std::move(c));
      return;
    }
    Vec3 lo = cloud.points[order[begin]], hi = lo;
    for (auto i = begin; i < end; ++i) {
      lo = lo.cwiseMin(cloud.points[order[i]]);
      hi = hi.cwiseMax(cloud.points[order[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](Index a, Index b) {
                       const double ca = cloud.points[a][axis], cb = cloud.points[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    self(self, begin, mid);
    self(self, mid, end);
  };
  recurse(recurse, 0, order.size());
  return clusters;
}

}  // namespace pcad
