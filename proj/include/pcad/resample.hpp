#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "pcad/point_cloud.hpp"
#include "pcad/spatial_index.hpp"

namespace pcad {

// Keeps one point (the centroid) per occupied leaf of an octree whose leaves
// are the cells of a lattice of pitch `cell_size` anchored at the origin.
// A centroid always falls inside its own cell, so a second pass at the same
// cell size maps every representative to a distinct cell again.
//
// A cloud whose bounding box fits inside one cell collapses to its centroid
// (the octree is a single root leaf).
inline PointCloud octree_downsample(const PointCloud& cloud, double cell_size) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size))
    throw ArgumentError("octree_downsample: cell_size must be positive");
  if (cloud.empty()) throw EmptyCloudError("octree_downsample: empty cloud");
  require_finite(cloud);

  Vec3 lo = cloud.points.front(), hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  PointCloud out;
  if (((hi - lo).array() <= cell_size).all()) {
    out.points.push_back(cloud.centroid());
    return out;
  }

  using Cell = std::array<std::int64_t, 3>;
  const auto n = cloud.size();
  std::vector<Cell> cells(n);
  Cell base{INT64_MAX, INT64_MAX, INT64_MAX};
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      cells[i][a] = static_cast<std::int64_t>(std::floor(cloud.points[i][a] / cell_size));
      base[a] = std::min(base[a], cells[i][a]);
    }
  }
  std::int64_t span = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a) {
      cells[i][a] -= base[a];
      span = std::max(span, cells[i][a]);
    }
  int depth = 0;
  while ((std::int64_t{1} << depth) <= span) ++depth;

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<std::uint32_t> scratch(n);

  // Recursive 8-way split on bit (level - 1) of the cell offsets.
  auto recurse = [&](auto&& self, std::size_t begin, std::size_t end, int level) -> void {
    if (begin == end) return;
    if (level == 0) {
      Vec3 c = Vec3::Zero();
      for (auto i = begin; i < end; ++i) c += cloud.points[order[i]];
      out.points.push_back(c / static_cast<double>(end - begin));
      return;
    }
    const int bit = level - 1;
    auto child_of = [&](std::uint32_t i) {
      return static_cast<int>(((cells[i][0] >> bit) & 1) | (((cells[i][1] >> bit) & 1) << 1) |
                              (((cells[i][2] >> bit) & 1) << 2));
    };
    std::array<std::size_t, 9> start{};
    for (auto i = begin; i < end; ++i) ++start[child_of(order[i]) + 1];
    for (int c = 0; c < 8; ++c) start[c + 1] += start[c];
    auto fill = start;
    for (auto i = begin; i < end; ++i) {
      auto id = order[i];
      scratch[begin + fill[child_of(id)]++] = id;
    }
    std::copy(scratch.begin() + begin, scratch.begin() + end, order.begin() + begin);
    for (int c = 0; c < 8; ++c) self(self, begin + start[c], begin + start[c + 1], level - 1);
  };
  recurse(recurse, 0, n, depth);
  return out;
}

struct DenoiseResult {
  PointCloud cloud;
  IndexList removed;  // indices into the input cloud, ascending
};

// Statistical outlier removal: a point is dropped iff the mean distance to its
// k nearest neighbours exceeds mean + std_ratio * stddev of that statistic
// over the cloud. With `iterate`, passes repeat on the survivors until nothing
// is removed (at most `max_passes`).
inline DenoiseResult denoise_statistical(const PointCloud& cloud, std::size_t k, double std_ratio,
                                         bool iterate = false, int max_passes = 10) {
  if (k < 1) throw ArgumentError("denoise: k must be >= 1");
  if (!(std_ratio > 0.0)) throw ArgumentError("denoise: std_ratio must be > 0");
  if (cloud.size() <= k) throw ArgumentError("denoise: cloud needs more than k points");

  IndexList alive(cloud.size());
  std::iota(alive.begin(), alive.end(), Index{0});
  IndexList removed;
  const int passes = iterate ? std::max(1, max_passes) : 1;
  for (int pass = 0; pass < passes && alive.size() > k; ++pass) {
    PointCloud current = select(cloud, alive);
    SpatialIndex index(current.points);
    const auto stat = mean_knn_distances(current, index, k);
    const double n = static_cast<double>(stat.size());
    const double mean = std::accumulate(stat.begin(), stat.end(), 0.0) / n;
    double var = 0.0;
    for (double s : stat) var += (s - mean) * (s - mean);
    const double stddev = std::sqrt(var / n);
    const auto [mn, mx] = std::minmax_element(stat.begin(), stat.end());
    // identical statistics up to rounding: zero variance, nothing deviates
    if (*mx - *mn <= 1e-12 * std::max(1.0, std::abs(mean))) break;
    const double threshold = mean + std_ratio * stddev;

    IndexList next;
    next.reserve(alive.size());
    bool any = false;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (stat[i] > threshold) {
        removed.push_back(alive[i]);
        any = true;
      } else {
        next.push_back(alive[i]);
      }
    }
    alive = std::move(next);
    if (!any) break;
  }
  std::sort(removed.begin(), removed.end());
  return {select(cloud, alive), std::move(removed)};
}

}  // namespace pcad
