#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pcad/normals.hpp"
#include "pcad/shapes.hpp"
#include "pcad/spcg.hpp"
#include "test_support.hpp"

using namespace pcad;

namespace {

PointCloud with_normals(PointCloud c) {
  SpatialIndex idx(c.points);
  return estimate_normals_curvature(c, 16, idx);
}

PointCloud washer(std::size_t n = 4096, std::uint64_t seed = 1) {
  auto s = default_shape(ShapeKind::washer);
  s.n_points = n;
  s.seed = seed;
  s.noise_sigma = 0.01;
  return make_shape(s);
}

double bounding_radius(const PointCloud& c, std::span<const Index> region, Vec3& centroid) {
  centroid = Vec3::Zero();
  for (auto i : region) centroid += c.points[i];
  centroid /= static_cast<double>(region.size());
  double r = 0.0;
  for (auto i : region) r = std::max(r, (c.points[i] - centroid).norm());
  return r;
}

}  // namespace

TEST(RegionScoring, FlatCloudHasNoEligibleRegion) {
  PointCloud c;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) c.points.emplace_back(i * 0.5, j * 0.5, 0.0);
  c = with_normals(c);
  auto clusters = cluster_points(c, 100);
  auto scores = score_regions(c, clusters, 0.2);
  for (const auto& s : scores) EXPECT_FALSE(s.eligible);
}

TEST(RegionScoring, FormulaReadout) {
  PointCloud c;
  c.points = {Vec3(5, 0, 0), Vec3(5, 0, 0), Vec3(-5, 0, 0), Vec3(-5, 0, 0)};
  c.curvatures = std::vector<double>{0.3, 0.3, 0.0, 0.0};
  std::vector<IndexList> clusters{{0, 1}, {2, 3}};
  auto scores = score_regions(c, clusters, 0.2);
  ASSERT_TRUE(scores[0].eligible);
  EXPECT_NEAR(scores[0].score, 5.3, 1e-12);
  EXPECT_FALSE(scores[1].eligible);
  EXPECT_THROW(score_regions(c, std::vector<IndexList>{}, 0.2), ArgumentError);
  EXPECT_THROW(score_regions(c, clusters, 1.5), ArgumentError);
}

TEST(RegionScoring, TorusRecomputation) {
  auto s = default_shape(ShapeKind::ring);
  s.n_points = 4096;
  s.seed = 4;
  auto c = with_normals(make_shape(s));
  auto clusters = cluster_points(c, c.size() / 16);
  ASSERT_EQ(clusters.size(), 16u);
  auto scores = score_regions(c, clusters, 0.05);

  double cx = 0, cy = 0, cz = 0;
  for (const auto& p : c.points) cx += p.x(), cy += p.y(), cz += p.z();
  cx /= c.size(), cy /= c.size(), cz /= c.size();
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    double mx = 0, my = 0, mz = 0, cur = 0;
    for (auto i : clusters[j]) mx += c.points[i].x(), my += c.points[i].y(), mz += c.points[i].z(), cur += (*c.curvatures)[i];
    const double m = static_cast<double>(clusters[j].size());
    mx /= m, my /= m, mz /= m, cur /= m;
    const double dist = std::sqrt((mx - cx) * (mx - cx) + (my - cy) * (my - cy) + (mz - cz) * (mz - cz));
    EXPECT_EQ(scores[j].eligible, cur > 0.05);
    if (scores[j].eligible) {
      EXPECT_NEAR(scores[j].score, dist + cur, 1e-9);
    }
  }
}

TEST(RegionSelection, ArgmaxFallbackAndTies) {
  auto make = [](std::vector<double> score, std::vector<double> cur, std::vector<bool> ok) {
    std::vector<RegionScore> v;
    for (std::size_t i = 0; i < score.size(); ++i) {
      RegionScore r;
      r.cluster_id = i;
      r.score = score[i];
      r.curvature = cur[i];
      r.eligible = ok[i];
      v.push_back(r);
    }
    return v;
  };
  EXPECT_EQ(select_region(make({2.0, 5.3, 1.1}, {0.3, 0.3, 0.3}, {true, true, true})), 1u);
  EXPECT_EQ(select_region(make({0, 0}, {0.05, 0.15}, {false, false})), 1u);
  EXPECT_EQ(select_region(make({4.0, 7.0, 7.0}, {0.3, 0.3, 0.3}, {true, true, true})), 1u);
  EXPECT_EQ(select_region(make({9.0, 1.0}, {0.3, 0.3}, {false, true})), 1u);
  EXPECT_THROW(select_region(std::vector<RegionScore>{}), ArgumentError);
}

TEST(AddPoints, CardinalityAndContainment) {
  auto c = with_normals(washer());
  auto clusters = cluster_points(c, 256);
  for (std::uint64_t run = 0; run < 50; ++run) {
    const auto& region = clusters[run % clusters.size()];
    std::mt19937_64 rng(run);
    const std::size_t budget = run == 0 ? 1 : 40;
    auto res = add_points(c, region, budget, rng);
    ASSERT_EQ(res.cloud.size(), c.size() + budget);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < res.mask.size(); ++i) {
      positives += res.mask[i];
      EXPECT_EQ(res.mask[i] != 0, i >= c.size());
    }
    EXPECT_EQ(positives, budget);
    Vec3 centroid;
    const double r = bounding_radius(c, region, centroid);
    for (std::size_t i = c.size(); i < res.cloud.size(); ++i) EXPECT_LE((res.cloud.points[i] - centroid).norm(), 2 * r);
    for (std::size_t i = 0; i < c.size(); ++i) ASSERT_EQ(res.cloud.points[i], c.points[i]);
  }
}

TEST(AddPoints, DeterministicAndPreconditions) {
  auto c = with_normals(washer(2048));
  auto clusters = cluster_points(c, 256);
  std::mt19937_64 a(9), b(9);
  auto r1 = add_points(c, clusters[0], 10, a);
  auto r2 = add_points(c, clusters[0], 10, b);
  EXPECT_EQ(checksum(r1.cloud), checksum(r2.cloud));
  PointCloud bare;
  bare.points = c.points;
  EXPECT_THROW(add_points(bare, clusters[0], 10, a), StateError);
  EXPECT_THROW(add_points(c, clusters[0], 0, a), ArgumentError);
}

TEST(RemovePoints, ConnectedPatch) {
  auto c = with_normals(washer());
  auto clusters = cluster_points(c, 256);
  for (std::uint64_t run = 0; run < 50; ++run) {
    const auto& region = clusters[(run * 7) % clusters.size()];
    std::mt19937_64 rng(run);
    const std::size_t budget = run == 0 ? 1 : 60;
    auto res = remove_points(c, region, budget, rng);
    ASSERT_EQ(res.cloud.size(), c.size() - budget);
    ASSERT_EQ(res.removed.size(), budget);
    double diameter = 0.0;
    for (auto i : region)
      for (auto j : region) diameter = std::max(diameter, (c.points[i] - c.points[j]).norm());
    double gap = 0.0;
    for (auto i : res.removed)
      for (auto j : res.removed) gap = std::max(gap, (c.points[i] - c.points[j]).norm());
    EXPECT_LE(gap, diameter);
    // every removed point belongs to the region
    for (auto i : res.removed) EXPECT_TRUE(std::find(region.begin(), region.end(), i) != region.end());
  }
}

TEST(RemovePoints, DeterministicAndPreconditions) {
  auto c = with_normals(washer(2048));
  auto clusters = cluster_points(c, 256);
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(remove_points(c, clusters[1], 20, a).removed, remove_points(c, clusters[1], 20, b).removed);
  EXPECT_THROW(remove_points(c, clusters[1], clusters[1].size(), a), ArgumentError);
  EXPECT_THROW(remove_points(c, clusters[1], 0, a), ArgumentError);
}

TEST(Generate, BudgetIsTruncatedFraction) {
  auto c = washer(10000, 2);
  SpcgConfig cfg;
  auto add = generate(c, 0.015, ModeChoice::add, cfg, 5);
  EXPECT_EQ(add.perturbed.size(), 10150u);
  EXPECT_EQ(std::count(add.mask.begin(), add.mask.end(), 1), 150);
  EXPECT_EQ(add.mask, add.supervision);
  auto rem = generate(c, 0.015, ModeChoice::remove, cfg, 5);
  EXPECT_EQ(rem.perturbed.size(), 9850u);
  EXPECT_EQ(std::count(rem.mask.begin(), rem.mask.end(), 1), 0);
  EXPECT_EQ(rem.removed.size(), 150u);
  EXPECT_GT(std::count(rem.supervision.begin(), rem.supervision.end(), 1), 0);
}

TEST(Generate, InvariantsOverSeeds) {
  auto c = washer(4096, 3);
  SpcgConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (double strength : {0.0078, 0.0128, 0.0228}) {
      auto s = generate(c, strength, ModeChoice::random, cfg, seed);
      const auto budget = static_cast<std::size_t>(4096 * strength);
      EXPECT_EQ(s.budget, budget);
      if (s.mode == PerturbMode::add) {
        EXPECT_EQ(s.perturbed.size(), 4096 + budget);
        for (std::size_t i = 0; i < c.size(); ++i) ASSERT_EQ(s.perturbed.points[i], c.points[i]);
        const double ratio = static_cast<double>(budget) / static_cast<double>(s.perturbed.size());
        EXPECT_GE(ratio, 0.0075);
        EXPECT_LE(ratio, 0.0228);
      } else {
        EXPECT_EQ(s.perturbed.size(), 4096 - budget);
        std::vector<std::uint8_t> gone(c.size(), 0);
        for (auto i : s.removed) gone[i] = 1;
        for (std::size_t i = 0, j = 0; i < c.size(); ++i)
          if (!gone[i]) ASSERT_EQ(s.perturbed.points[j++], c.points[i]);
      }
      auto again = generate(c, strength, ModeChoice::random, cfg, seed);
      EXPECT_EQ(checksum(again.perturbed), checksum(s.perturbed));
      EXPECT_EQ(again.supervision, s.supervision);
    }
  }
}

TEST(Generate, SelectedRegionClearsThreshold) {
  auto s = default_shape(ShapeKind::hex_nut);
  s.n_points = 4096;
  auto c = make_shape(s);
  SpcgConfig cfg;
  auto sample = generate(c, 0.015, ModeChoice::add, cfg, 1);
  auto clusters = cluster_points(sample.source, cfg.target_cluster_size);
  auto scores = score_regions(sample.source, clusters, cfg.curvature_threshold);
  const bool any = std::any_of(scores.begin(), scores.end(), [](const RegionScore& r) { return r.eligible; });
  if (any) {
    EXPECT_TRUE(scores[sample.region_id].eligible);
  }
  EXPECT_EQ(sample.region, clusters[sample.region_id]);
}

TEST(Generate, StrengthErrors) {
  auto c = testing_support::random_cloud(100, 1);
  SpcgConfig cfg;
  EXPECT_THROW(generate(c, 0.005, ModeChoice::add, cfg, 1), ArgumentError);
  EXPECT_THROW(generate(c, 0.0, ModeChoice::add, cfg, 1), ArgumentError);
  EXPECT_THROW(generate(c, 1.5, ModeChoice::add, cfg, 1), ArgumentError);
  EXPECT_THROW(parse_mode_choice("sideways"), ArgumentError);
}

TEST(JitterRegion, KeepsCountAndMasksRegion) {
  auto c = washer(2048, 5);
  auto s = jitter_region(c, 0.015, 11);
  EXPECT_EQ(s.perturbed.size(), c.size());
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.mask.begin(), s.mask.end(), 1)), s.budget);
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!s.mask[i]) ASSERT_EQ(s.perturbed.points[i], c.points[i]);
}
