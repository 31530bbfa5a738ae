#pragma once

// Synthetic defect generation driven by geometric morphology: cluster the
// cloud, rank clusters by curvature plus distance from the cloud centre, and
// grow (add) or carve (remove) a defect inside the best-ranked cluster.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcad/clustering.hpp"
#include "pcad/normals.hpp"
#include "pcad/point_cloud.hpp"
#include "pcad/spatial_index.hpp"

namespace pcad {

enum class PerturbMode { add, remove, jitter };
enum class ModeChoice { add, remove, random };
enum class ClusterCurvature { mean, max };

inline std::string to_string(PerturbMode m) {
  switch (m) {
    case PerturbMode::add: return "add";
    case PerturbMode::remove: return "remove";
    case PerturbMode::jitter: return "jitter";
  }
  return "?";
}

inline ModeChoice parse_mode_choice(const std::string& s) {
  if (s == "add") return ModeChoice::add;
  if (s == "remove") return ModeChoice::remove;
  if (s == "random") return ModeChoice::random;
  throw ArgumentError("unknown perturbation mode '" + s + "'");
}

struct SpcgConfig {
  double curvature_threshold = 0.2;
  std::size_t target_cluster_size = 256;
  double strength = 0.015;
  ModeChoice mode = ModeChoice::random;
  double remove_probability = 0.5;  // used when mode is random
  std::size_t knn_k = 16;
  std::uint64_t seed = 0;
  ClusterCurvature cluster_curvature = ClusterCurvature::mean;
};

struct RegionScore {
  std::size_t cluster_id = 0;
  Vec3 centroid = Vec3::Zero();
  double curvature = 0.0;
  double distance_to_center = 0.0;
  double score = 0.0;  // meaningful only when eligible
  bool eligible = false;
};

struct SynthSample {
  PointCloud source;
  PointCloud perturbed;
  // Anomaly flags on `perturbed`: exactly the appended points in add mode,
  // all zero in remove mode (the removed points no longer exist).
  std::vector<std::uint8_t> mask;
  // Training/evaluation labels on `perturbed`. Equals `mask` in add mode; in
  // remove mode marks the surviving ring around the hole.
  std::vector<std::uint8_t> supervision;
  IndexList removed;  // source indices, remove mode only
  IndexList region;   // source indices of the selected cluster
  PerturbMode mode = PerturbMode::add;
  double strength = 0.0;
  std::size_t budget = 0;
  std::size_t region_id = 0;
  std::uint64_t seed = 0;
};

// Scores every cluster. The reference centre is the mean of all points; a
// cluster is eligible when its aggregated point curvature exceeds the
// threshold, and then scores distance(centroid, centre) + curvature.
inline std::vector<RegionScore> score_regions(const PointCloud& cloud, std::span<const IndexList> clusters,
                                              double curvature_threshold,
                                              ClusterCurvature aggregate = ClusterCurvature::mean) {
  if (clusters.empty()) throw ArgumentError("score_regions: no clusters");
  if (!cloud.curvatures) throw StateError("score_regions: cloud has no curvatures");
  if (!(curvature_threshold >= 0.0 && curvature_threshold <= 1.0))
    throw ArgumentError("score_regions: curvature threshold outside [0, 1]");
  const Vec3 center = cloud.centroid();
  std::vector<RegionScore> out;
  out.reserve(clusters.size());
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    const auto& members = clusters[j];
    if (members.empty()) throw ArgumentError("score_regions: empty cluster");
    RegionScore r;
    r.cluster_id = j;
    double cur = 0.0;
    for (auto i : members) {
      r.centroid += cloud.points[i];
      const double c = (*cloud.curvatures)[i];
      cur = aggregate == ClusterCurvature::mean ? cur + c : std::max(cur, c);
    }
    r.centroid /= static_cast<double>(members.size());
    r.curvature = aggregate == ClusterCurvature::mean ? cur / static_cast<double>(members.size()) : cur;
    r.distance_to_center = (r.centroid - center).norm();
    r.eligible = r.curvature > curvature_threshold;
    if (r.eligible) r.score = r.distance_to_center + r.curvature;
    out.push_back(r);
  }
  return out;
}

// Highest-scoring eligible cluster; when none is eligible, the cluster with
// the highest curvature. Ties go to the lower cluster id.
inline std::size_t select_region(std::span<const RegionScore> scores) {
  if (scores.empty()) throw ArgumentError("select_region: no scores");
  const RegionScore* best = nullptr;
  for (const auto& s : scores)
    if (s.eligible && (!best || s.score > best->score)) best = &s;
  if (best) return best->cluster_id;
  for (const auto& s : scores)
    if (!best || s.curvature > best->curvature) best = &s;
  return best->cluster_id;
}

// Mean nearest-neighbour spacing over the given points.
inline double region_spacing(const PointCloud& cloud, const SpatialIndex& index, std::span<const Index> region,
                             std::size_t k = 8) {
  k = std::min(k, cloud.size() - 1);
  if (k == 0) return 0.0;
  std::vector<std::pair<double, Index>> found;
  double total = 0.0;
  for (auto i : region) {
    index.knn_with_distances(cloud.points[i], k + 1, found);
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& [d2, j] : found) {
      if (j == i || used == k) continue;
      sum += std::sqrt(d2);
      ++used;
    }
    total += sum / static_cast<double>(k);
  }
  return total / static_cast<double>(region.size());
}

namespace detail {

inline Vec3 uniform_in_ball(std::mt19937_64& rng, double radius) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
  const double len = dir.norm();
  if (len == 0.0) return Vec3::Zero();
  return dir / len * (radius * std::cbrt(unit(rng)));
}

}  // namespace detail

struct AddResult {
  PointCloud cloud;
  std::vector<std::uint8_t> mask;
};

// Appends `budget` points, each grown from a uniformly drawn region point:
// offset along its normal by U[0.5, 2.0] * spacing, plus a uniform jitter
// inside a ball of radius 0.25 * spacing. New points inherit the normal and
// curvature of the point they grew from.
inline AddResult add_points(const PointCloud& cloud, std::span<const Index> region, std::size_t budget,
                            std::mt19937_64& rng, double spacing) {
  if (budget < 1) throw ArgumentError("add_points: budget must be >= 1");
  if (region.empty()) throw ArgumentError("add_points: empty region");
  if (!cloud.normals) throw StateError("add_points: cloud has no normals");
  AddResult out{cloud, std::vector<std::uint8_t>(cloud.size() + budget, 0)};
  auto& pts = out.cloud.points;
  pts.reserve(cloud.size() + budget);
  std::uniform_int_distribution<std::size_t> pick(0, region.size() - 1);
  std::uniform_real_distribution<double> height(0.5, 2.0);
  for (std::size_t b = 0; b < budget; ++b) {
    const Index from = region[pick(rng)];
    const Vec3& n = (*cloud.normals)[from];
    const double h = height(rng) * spacing;
    pts.push_back(cloud.points[from] + h * n + detail::uniform_in_ball(rng, 0.25 * spacing));
    out.cloud.normals->push_back(n);
    if (out.cloud.curvatures) out.cloud.curvatures->push_back((*cloud.curvatures)[from]);
    out.mask[cloud.size() + b] = 1;
  }
  out.cloud.labels.reset();
  out.cloud.scores.reset();
  return out;
}

inline AddResult add_points(const PointCloud& cloud, std::span<const Index> region, std::size_t budget,
                            std::mt19937_64& rng) {
  if (cloud.size() < 2) throw ArgumentError("add_points: cloud too small");
  SpatialIndex index(cloud.points);
  return add_points(cloud, region, budget, rng, region_spacing(cloud, index, region));
}

struct RemoveResult {
  PointCloud cloud;
  IndexList removed;  // source indices, ascending
};

// Deletes a contiguous patch: a uniformly drawn seed point of the region plus
// its budget - 1 nearest neighbours within the region.
inline RemoveResult remove_points(const PointCloud& cloud, std::span<const Index> region, std::size_t budget,
                                  std::mt19937_64& rng) {
  if (budget < 1) throw ArgumentError("remove_points: budget must be >= 1");
  if (budget >= region.size())
    throw ArgumentError("remove_points: budget " + std::to_string(budget) + " must be below region size " +
                        std::to_string(region.size()));
  std::uniform_int_distribution<std::size_t> pick(0, region.size() - 1);
  const std::size_t seed_pos = pick(rng);
  const Vec3& seed = cloud.points[region[seed_pos]];
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(region.size());
  for (std::size_t r = 0; r < region.size(); ++r)
    order.emplace_back(r == seed_pos ? -1.0 : squared_distance(seed, cloud.points[region[r]]), r);
  std::partial_sort(order.begin(), order.begin() + budget, order.end());

  std::vector<std::uint8_t> gone(cloud.size(), 0);
  RemoveResult out;
  for (std::size_t b = 0; b < budget; ++b) {
    gone[region[order[b].second]] = 1;
    out.removed.push_back(region[order[b].second]);
  }
  std::sort(out.removed.begin(), out.removed.end());
  IndexList keep;
  keep.reserve(cloud.size() - budget);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (!gone[i]) keep.push_back(i);
  out.cloud = select(cloud, keep);
  out.cloud.labels.reset();
  out.cloud.scores.reset();
  return out;
}

// Labels for a remove-mode sample: surviving points within `radius` of any
// removed point. Falls back to the survivor nearest each removed point when
// the ring would be empty.
inline std::vector<std::uint8_t> boundary_ring(const PointCloud& source, const SpatialIndex& source_index,
                                               std::span<const Index> removed, double radius) {
  std::vector<std::uint8_t> gone(source.size(), 0);
  for (auto i : removed) gone[i] = 1;
  // source index -> perturbed index
  std::vector<std::size_t> remap(source.size(), 0);
  for (std::size_t i = 0, j = 0; i < source.size(); ++i)
    if (!gone[i]) remap[i] = j++;
  std::vector<std::uint8_t> ring(source.size() - removed.size(), 0);
  bool any = false;
  for (auto r : removed)
    for (auto j : source_index.radius(source.points[r], radius))
      if (!gone[j]) ring[remap[j]] = 1, any = true;
  if (!any) {
    for (auto r : removed) {
      const auto near = source_index.knn(source.points[r], std::min(source.size(), removed.size() + 1));
      for (auto j : near)
        if (!gone[j]) {
          ring[remap[j]] = 1;
          break;
        }
    }
  }
  return ring;
}

// Returns the cloud with normals and curvatures, reusing them when present.
inline PointCloud with_geometry(const PointCloud& cloud, std::size_t k, const SpatialIndex& index) {
  if (cloud.normals && cloud.curvatures) return cloud;
  return estimate_normals_curvature(cloud, std::min(k, cloud.size() - 1), index);
}

inline std::size_t defect_budget(std::size_t n, double strength) {
  if (!(strength > 0.0 && strength <= 1.0)) throw ArgumentError("strength must lie in (0, 1]");
  const auto budget = static_cast<std::size_t>(static_cast<double>(n) * strength);
  if (budget < 1)
    throw ArgumentError("strength " + std::to_string(strength) + " yields an empty budget for " +
                        std::to_string(n) + " points");
  return budget;
}

// Full generation pipeline: cluster, score, select, perturb.
inline SynthSample generate(const PointCloud& cloud, double strength, ModeChoice mode, const SpcgConfig& cfg,
                            std::uint64_t seed) {
  if (cloud.size() < 4) throw ArgumentError("generate: cloud too small");
  if (!(cfg.remove_probability >= 0.0 && cfg.remove_probability <= 1.0))
    throw ArgumentError("generate: remove_probability outside [0, 1]");
  require_finite(cloud);
  const std::size_t budget = defect_budget(cloud.size(), strength);
  std::mt19937_64 rng(seed);

  SpatialIndex index(cloud.points);
  SynthSample s;
  s.source = with_geometry(cloud, cfg.knn_k, index);
  s.strength = strength;
  s.budget = budget;
  s.seed = seed;

  const auto clusters = cluster_points(s.source, std::min(cfg.target_cluster_size, cloud.size()));
  const auto scores = score_regions(s.source, clusters, cfg.curvature_threshold, cfg.cluster_curvature);
  s.region_id = select_region(scores);
  s.region = clusters[s.region_id];
  const double spacing = region_spacing(s.source, index, s.region);

  bool add = mode == ModeChoice::add;
  if (mode == ModeChoice::random) add = std::bernoulli_distribution(1.0 - cfg.remove_probability)(rng);
  if (add) {
    s.mode = PerturbMode::add;
    auto res = add_points(s.source, s.region, budget, rng, spacing);
    s.perturbed = std::move(res.cloud);
    s.mask = std::move(res.mask);
    s.supervision = s.mask;
  } else {
    s.mode = PerturbMode::remove;
    auto res = remove_points(s.source, s.region, budget, rng);
    s.perturbed = std::move(res.cloud);
    s.removed = std::move(res.removed);
    s.mask.assign(s.perturbed.size(), 0);
    s.supervision = boundary_ring(s.source, index, s.removed, spacing);
  }
  return s;
}

inline SynthSample generate(const PointCloud& cloud, const SpcgConfig& cfg) {
  return generate(cloud, cfg.strength, cfg.mode, cfg, cfg.seed);
}

// Replacement generator used for ablations: displaces the `budget` points
// nearest a uniformly drawn seed by uniform noise in [-spacing, spacing]^3.
// Point count is unchanged and the displaced points are the mask.
inline SynthSample jitter_region(const PointCloud& cloud, double strength, std::uint64_t seed) {
  if (cloud.size() < 4) throw ArgumentError("jitter_region: cloud too small");
  const std::size_t budget = defect_budget(cloud.size(), strength);
  std::mt19937_64 rng(seed);
  SpatialIndex index(cloud.points);
  SynthSample s;
  s.source = cloud;
  s.strength = strength;
  s.budget = budget;
  s.seed = seed;
  s.mode = PerturbMode::jitter;
  const auto center = std::uniform_int_distribution<std::size_t>(0, cloud.size() - 1)(rng);
  s.region = index.knn(cloud.points[center], budget);
  const double spacing = region_spacing(cloud, index, s.region);
  s.perturbed = cloud;
  s.perturbed.labels.reset();
  s.perturbed.scores.reset();
  s.mask.assign(cloud.size(), 0);
  std::uniform_real_distribution<double> noise(-spacing, spacing);
  for (auto i : s.region) {
    s.perturbed.points[i] += Vec3(noise(rng), noise(rng), noise(rng));
    s.mask[i] = 1;
  }
  s.supervision = s.mask;
  std::sort(s.region.begin(), s.region.end());
  return s;
}

}  // namespace pcad
