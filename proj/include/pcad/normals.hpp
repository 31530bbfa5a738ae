#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pcad/point_cloud.hpp"
#include "pcad/spatial_index.hpp"

namespace pcad {

// Fills normals and curvatures from a PCA of each point's k-neighbourhood
// (the point itself included).
//
// normal    = eigenvector of the smallest covariance eigenvalue, flipped to
//             point away from the cloud centroid;
// curvature = 3 * lambda_min / (lambda_0 + lambda_1 + lambda_2), which maps
//             surface variation from [0, 1/3] onto [0, 1].
//
// Patches whose neighbours all coincide get curvature 0 and normal +z; their
// indices are appended to `degenerate` when given.
inline PointCloud estimate_normals_curvature(const PointCloud& cloud, std::size_t k,
                                             const SpatialIndex& index,
                                             IndexList* degenerate = nullptr) {
  if (k < 3) throw ArgumentError("estimate_normals_curvature: k must be >= 3");
  if (cloud.size() <= k) throw ArgumentError("estimate_normals_curvature: cloud needs more than k points");
  require_finite(cloud);

  PointCloud out = cloud;
  const auto n = cloud.size();
  out.normals.emplace(n);
  out.curvatures.emplace(n);
  const Vec3 center = cloud.centroid();

  std::vector<std::pair<double, Index>> found;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
  for (std::size_t i = 0; i < n; ++i) {
    index.knn_with_distances(cloud.points[i], k, found);
    Vec3 mean = Vec3::Zero();
    for (const auto& [d2, j] : found) mean += cloud.points[j];
    mean /= static_cast<double>(found.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& [d2, j] : found) {
      const Vec3 d = cloud.points[j] - mean;
      cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(found.size());

    const double trace = cov.trace();
    if (!(trace > 0.0)) {
      (*out.normals)[i] = Vec3::UnitZ();
      (*out.curvatures)[i] = 0.0;
      if (degenerate) degenerate->push_back(i);
      continue;
    }
    solver.compute(cov);
    const auto& ev = solver.eigenvalues();  // ascending
    const double lmin = std::max(0.0, ev[0]);
    const double sum = std::max(0.0, ev[0]) + std::max(0.0, ev[1]) + std::max(0.0, ev[2]);
    Vec3 normal = solver.eigenvectors().col(0).normalized();
    if (normal.dot(cloud.points[i] - center) < 0.0) normal = -normal;
    (*out.normals)[i] = normal;
    (*out.curvatures)[i] = sum > 0.0 ? std::clamp(3.0 * lmin / sum, 0.0, 1.0) : 0.0;
  }
  return out;
}

inline PointCloud estimate_normals_curvature(const PointCloud& cloud, std::size_t k,
                                             IndexList* degenerate = nullptr) {
  if (cloud.empty()) throw EmptyCloudError("estimate_normals_curvature: empty cloud");
  SpatialIndex index(cloud.points);
  return estimate_normals_curvature(cloud, k, index, degenerate);
}

}  // namespace pcad
