#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcad/error.hpp"

namespace pcad {

using Vec3 = Eigen::Vector3d;
using Index = std::size_t;
using IndexList = std::vector<Index>;

// Ordered 3D point set (millimeters) with optional per-point attributes.
// Every optional attribute, when present, has exactly size() entries.
struct PointCloud {
  std::vector<Vec3> points;
  std::optional<std::vector<Vec3>> normals;
  std::optional<std::vector<double>> curvatures;
  std::optional<std::vector<std::uint8_t>> labels;
  // Per-point anomaly scores; carried only for export as the ply "score" channel.
  std::optional<std::vector<double>> scores;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  // Throws StateError when an attribute length disagrees with the point count,
  // a normal is not unit length, or a curvature falls outside [0, 1].
  void validate() const {
    const auto n = points.size();
    if (normals) {
      if (normals->size() != n) throw StateError("normals length mismatch");
      for (const auto& v : *normals)
        if (std::abs(v.norm() - 1.0) > 1e-6) throw StateError("normal is not unit length");
    }
    if (curvatures) {
      if (curvatures->size() != n) throw StateError("curvatures length mismatch");
      for (double c : *curvatures)
        if (!(c >= 0.0 && c <= 1.0)) throw StateError("curvature outside [0, 1]");
    }
    if (labels && labels->size() != n) throw StateError("labels length mismatch");
    if (scores && scores->size() != n) throw StateError("scores length mismatch");
  }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points) c += p;
    return points.empty() ? c : Vec3(c / static_cast<double>(points.size()));
  }

  std::size_t positive_labels() const {
    if (!labels) return 0;
    std::size_t k = 0;
    for (auto l : *labels) k += l != 0;
    return k;
  }
};

// Returns the sub-cloud made of `keep` (in that order), carrying every attribute.
inline PointCloud select(const PointCloud& cloud, std::span<const Index> keep) {
  PointCloud out;
  out.points.reserve(keep.size());
  for (auto i : keep) out.points.push_back(cloud.points[i]);
  auto pick = [&](const auto& src, auto& dst) {
    if (!src) return;
    dst.emplace();
    dst->reserve(keep.size());
    for (auto i : keep) dst->push_back((*src)[i]);
  };
  pick(cloud.normals, out.normals);
  pick(cloud.curvatures, out.curvatures);
  pick(cloud.labels, out.labels);
  pick(cloud.scores, out.scores);
  return out;
}

// FNV-1a over the raw coordinate bytes; used for split-disjointness and
// reproducibility checks.
inline std::uint64_t checksum(const PointCloud& cloud) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t len) {
    auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : cloud.points) mix(p.data(), 3 * sizeof(double));
  if (cloud.labels) mix(cloud.labels->data(), cloud.labels->size());
  return h;
}

inline void require_finite(const PointCloud& cloud) {
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (!cloud.points[i].allFinite())
      throw InputError("non-finite coordinate at point " + std::to_string(i));
}

}  // namespace pcad
