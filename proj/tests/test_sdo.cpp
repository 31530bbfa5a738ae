#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "pcad/pipeline.hpp"
#include "pcad/shapes.hpp"
#include "test_support.hpp"

using namespace pcad;
using testing_support::random_cloud;

namespace {

FeatureMap random_map(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  FeatureMap f;
  f.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < f.features.size(); ++i) f.features.data()[i] = n01(rng);
  return f;
}

std::vector<PointCloud> washers(std::size_t count, std::uint64_t seed, std::size_t n = 2048) {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto s = default_shape(ShapeKind::washer);
    s.n_points = n;
    s.noise_sigma = 0.02;
    s.seed = seed + i;
    out.push_back(make_shape(s));
  }
  return out;
}

EncoderConfig small_encoder() {
  EncoderConfig e;
  e.hidden = {16, 16};
  e.feature_dim = 16;
  return e;
}

// Mean synthetic / mean clean distance over fresh SPCG samples.
double separability(const std::vector<PointCloud>& clouds, const EncoderParams& expert,
                    const EncoderParams& apprentice, const TrainConfig& cfg) {
  double ds = 0.0, dn = 0.0;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    auto sample = generate(clouds[i], 0.015, ModeChoice::add, cfg.spcg, 900 + i);
    auto r = anomaly_scores(sample.perturbed, expert, apprentice, cfg.k);
    auto split = split_by_mask(r.point_scores, sample.supervision);
    ds += std::accumulate(split.synth.begin(), split.synth.end(), 0.0) / static_cast<double>(split.synth.size());
    dn += std::accumulate(split.normal.begin(), split.normal.end(), 0.0) / static_cast<double>(split.normal.size());
  }
  return ds / dn;
}

}  // namespace

TEST(PointDistances, Readouts) {
  auto a = random_map(10, 4, 1);
  for (double d : point_distances(a, a)) EXPECT_EQ(d, 0.0);
  auto b = a;
  b.features.row(3) += Eigen::RowVectorXd::Unit(4, 2);
  EXPECT_NEAR(point_distances(a, b)[3], 1.0, 1e-15);
  EXPECT_THROW(point_distances(a, random_map(10, 5, 1)), ArgumentError);
  EXPECT_THROW(point_distances(a, random_map(9, 4, 1)), ArgumentError);
}

TEST(PointDistances, MatchesNaiveLoop) {
  auto a = random_map(1000, 64, 2), b = random_map(1000, 64, 3);
  auto d = point_distances(a, b);
  for (std::size_t i = 0; i < 1000; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < 64; ++j) {
      const double t = a.features(static_cast<Eigen::Index>(i), j) - b.features(static_cast<Eigen::Index>(i), j);
      s += t * t;
    }
    ASSERT_NEAR(d[i], std::sqrt(s), 1e-12);
  }
}

TEST(SplitByMask, Readouts) {
  const std::vector<double> d{1.0, 2.0, 3.0};
  auto s = split_by_mask(d, std::vector<std::uint8_t>{1, 0, 1});
  EXPECT_EQ(s.synth, (std::vector<double>{1.0, 3.0}));
  EXPECT_EQ(s.normal, (std::vector<double>{2.0}));
  EXPECT_TRUE(split_by_mask(d, std::vector<std::uint8_t>{0, 0, 0}).synth.empty());
  EXPECT_THROW(split_by_mask(d, std::vector<std::uint8_t>{0, 1}), ArgumentError);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> dd(1 + rng() % 300, 1.0);
    std::vector<std::uint8_t> m(dd.size());
    for (auto& x : m) x = rng() & 1;
    auto p = split_by_mask(dd, m);
    EXPECT_EQ(p.normal.size() + p.synth.size(), dd.size());
  }
}

TEST(FocalWeights, Readouts) {
  const std::vector<double> d{1.0, 3.0};
  auto wn = focal_weights(d, 1.0, Role::normal);
  EXPECT_DOUBLE_EQ(wn[0], 0.5);
  EXPECT_DOUBLE_EQ(wn[1], 1.5);
  auto ws = focal_weights(d, 1.0, Role::synth);
  EXPECT_DOUBLE_EQ(ws[0], 2.0);
  EXPECT_DOUBLE_EQ(ws[1], 2.0 / 3.0);
  for (double w : focal_weights(std::vector<double>{0.3, 7.0, 2.0}, 0.0, Role::synth)) EXPECT_EQ(w, 1.0);
  for (std::size_t n : {3, 5, 7, 11, 13})
    for (double w : focal_weights(std::vector<double>(n, 0.1 * static_cast<double>(n)), 5.3, Role::normal))
      EXPECT_EQ(w, 1.0);
  for (double w : focal_weights(std::vector<double>(4, 0.0), 0.5, Role::synth)) EXPECT_EQ(w, 1.0);
  auto capped = focal_weights(std::vector<double>{0.0, 2.0}, 0.5, Role::synth, 1e3);
  EXPECT_EQ(capped[0], 1e3);
  EXPECT_THROW(focal_weights(d, -0.1, Role::normal), ArgumentError);
}

TEST(FocalWeights, UnitExponentSumsToLength) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> d(1 + rng() % 100);
    for (auto& x : d) x = u(rng);
    for (auto role : {Role::normal, Role::synth}) {
      auto w = focal_weights(d, 0.0, role);
      EXPECT_EQ(std::accumulate(w.begin(), w.end(), 0.0), static_cast<double>(d.size()));
    }
  }
}

TEST(SdoLoss, HandEvaluations) {
  EXPECT_DOUBLE_EQ(sdo_loss(make_batch({0.0, 0.0}, {1.0}, 0.0)), -1.0 / 3.0);
  EXPECT_DOUBLE_EQ(sdo_loss(make_batch({2.0, 4.0}, {}, 0.0)), 3.0);
  // alpha = 1: w_n = [0.5, 1.5], w_s = [2.0, 2/3]
  const double num = 0.5 * 1 + 1.5 * 3 - 2.0 * 1 - (2.0 / 3.0) * 3;
  const double den = 0.5 + 1.5 + 2.0 + 2.0 / 3.0;
  EXPECT_NEAR(sdo_loss(make_batch({1.0, 3.0}, {1.0, 3.0}, 1.0)), num / den, 1e-15);
  EXPECT_THROW(sdo_loss(make_batch({}, {}, 0.0)), ArgumentError);
}

TEST(SdoLoss, InvariantToWeightScaling) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.01, 3.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> dn(1 + rng() % 50), ds(rng() % 20);
    for (auto& x : dn) x = u(rng);
    for (auto& x : ds) x = u(rng);
    auto b = make_batch(dn, ds, 0.01);
    auto scaled = b;
    const double c = u(rng) * 10;
    for (auto& w : scaled.w_normal) w *= c;
    for (auto& w : scaled.w_synth) w *= c;
    EXPECT_NEAR(sdo_loss(scaled), sdo_loss(b), 1e-12);
  }
}

TEST(SdoLoss, GradientSignsAtFixedWeights) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> dn(5 + rng() % 20), ds(1 + rng() % 10);
    for (auto& x : dn) x = u(rng);
    for (auto& x : ds) x = u(rng);
    const auto b = make_batch(dn, ds, 0.01);
    const auto g = sdo_loss_gradient(b);
    const double h = 1e-6;
    for (std::size_t i = 0; i < dn.size(); ++i) {
      auto p = b, m = b;
      p.d_normal[i] += h, m.d_normal[i] -= h;
      const double fd = (sdo_loss(p) - sdo_loss(m)) / (2 * h);
      EXPECT_GE(fd, 0.0);
      EXPECT_NEAR(fd, g.d_normal[i], 1e-8);
    }
    for (std::size_t j = 0; j < ds.size(); ++j) {
      auto p = b, m = b;
      p.d_synth[j] += h, m.d_synth[j] -= h;
      const double fd = (sdo_loss(p) - sdo_loss(m)) / (2 * h);
      EXPECT_LE(fd, 0.0);
      EXPECT_NEAR(fd, g.d_synth[j], 1e-8);
    }
  }
}

TEST(Aggregate, TopFractionAndMax) {
  std::vector<double> s(200);
  std::iota(s.begin(), s.end(), 0.0);
  EXPECT_DOUBLE_EQ(aggregate_scores(s, {}), 198.5);
  EXPECT_DOUBLE_EQ(aggregate_scores(s, {Aggregation::max, 0.01}), 199.0);
  EXPECT_DOUBLE_EQ(aggregate_scores(std::vector<double>{3.0, 1.0}, {}), 3.0);
  EXPECT_THROW(aggregate_scores(s, {Aggregation::top_fraction, 0.0}), ArgumentError);
  EXPECT_THROW(aggregate_scores(std::vector<double>{}, {}), ArgumentError);
}

TEST(AnomalyScores, IdentityPermutationAndBaseline) {
  auto enc = small_encoder();
  auto expert = make_expert(enc);
  auto cloud = random_cloud(500, 8);
  auto same = expert;
  same.frozen = false;
  auto r0 = anomaly_scores(cloud, expert, same, enc.k);
  for (double v : r0.point_scores) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r0.object_score, 0.0);

  auto apprentice = make_apprentice(enc);
  auto r = anomaly_scores(cloud, expert, apprentice, enc.k);
  EXPECT_GT(*std::max_element(r.point_scores.begin(), r.point_scores.end()), 0.0);
  for (double v : r.point_scores) EXPECT_TRUE(std::isfinite(v) && v >= 0.0);

  std::vector<std::size_t> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  PointCloud shuffled;
  for (auto i : perm) shuffled.points.push_back(cloud.points[i]);
  auto rp = anomaly_scores(shuffled, expert, apprentice, enc.k);
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_NEAR(rp.point_scores[i], r.point_scores[perm[i]], 1e-12);
  EXPECT_NEAR(rp.object_score, r.object_score, 1e-12);
}

TEST(AnomalyScores, StateErrors) {
  auto enc = small_encoder();
  auto expert = make_expert(enc);
  auto other = enc;
  other.feature_dim = 8;
  EXPECT_THROW(anomaly_scores(random_cloud(100, 1), expert, make_apprentice(other), enc.k), StateError);
  auto plain = enc;
  plain.descriptor = {};
  EXPECT_THROW(anomaly_scores(random_cloud(100, 1), expert, make_apprentice(plain), enc.k), StateError);
  EXPECT_THROW(anomaly_scores(random_cloud(10, 1), expert, make_apprentice(enc), enc.k), StateError);
}

TEST(DefectHalo, MarksNeighboursOfLabelledPoints) {
  auto c = random_cloud(400, 10);
  SpatialIndex index(c.points);
  std::vector<std::uint8_t> labels(400, 0);
  labels[17] = 1;
  auto halo = defect_halo(c, index, labels, 8);
  EXPECT_EQ(halo[17], 0);
  std::vector<std::pair<double, Index>> found;
  for (std::size_t i = 0; i < 400; ++i) {
    if (i == 17) continue;
    index.knn_with_distances(c.points[i], 8, found);
    const bool sees = std::any_of(found.begin(), found.end(), [](const auto& f) { return f.second == 17; });
    EXPECT_EQ(halo[i] != 0, sees);
  }
  auto none = defect_halo(c, index, std::vector<std::uint8_t>(400, 0), 8);
  EXPECT_EQ(std::count(none.begin(), none.end(), 1), 0);
}

TEST(TrainingCenters, KeepsPositivesAndSkipsHalo) {
  std::vector<std::uint8_t> labels(100, 0), halo(100, 0);
  for (std::size_t i = 0; i < 5; ++i) labels[i * 7] = 1;
  for (std::size_t i = 50; i < 60; ++i) halo[i] = 1;
  std::mt19937_64 rng(1);
  auto c = training_centers(labels, halo, 20, rng);
  EXPECT_EQ(c.size(), 25u);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
  std::size_t pos = 0;
  for (auto i : c) {
    pos += labels[i];
    EXPECT_FALSE(halo[i]);
  }
  EXPECT_EQ(pos, 5u);
  EXPECT_EQ(training_centers(labels, halo, 0, rng).size(), 90u - 5u + 5u);
}

TEST(Train, FreezeContractAndDeterminism) {
  auto clouds = washers(4, 20);
  auto enc = small_encoder();
  auto expert = make_expert(enc);
  const auto before = checksum(expert);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  cfg.points_per_cloud = 128;
  auto a = train(clouds, cfg, expert, make_apprentice(enc));
  auto b = train(clouds, cfg, expert, make_apprentice(enc));
  EXPECT_EQ(checksum(expert), before);
  EXPECT_EQ(checksum(a.apprentice), checksum(b.apprentice));
  EXPECT_NE(checksum(a.apprentice), checksum(make_apprentice(enc)));
  ASSERT_EQ(a.log.size(), 2u);
  EXPECT_EQ(a.log[1].step, 1u);
  auto seeded = train(clouds, cfg, expert);
  EXPECT_EQ(seeded.apprentice.dims, expert.dims);
  EXPECT_FALSE(seeded.apprentice.frozen);
}

TEST(Train, SeparabilityRatioGrows) {
  auto clouds = washers(20, 40);
  auto held_out = washers(5, 400);
  auto enc = small_encoder();
  auto expert = make_expert(enc);
  auto apprentice = make_apprentice(enc);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 1;
  cfg.points_per_cloud = 256;
  cfg.learning_rate = 3e-3;
  cfg.spcg.mode = ModeChoice::add;
  const double before = separability(held_out, expert, apprentice, cfg);
  auto res = train(clouds, cfg, expert, apprentice);
  EXPECT_EQ(res.log.size(), 200u);
  const double after = separability(held_out, expert, res.apprentice, cfg);
  EXPECT_GT(after, before);
}

TEST(Train, Preconditions) {
  auto enc = small_encoder();
  auto expert = make_expert(enc);
  auto clouds = washers(2, 1, 1024);
  TrainConfig cfg;
  EXPECT_THROW(train(std::vector<PointCloud>{}, cfg, expert, make_apprentice(enc)), ArgumentError);
  auto unfrozen = expert;
  unfrozen.frozen = false;
  EXPECT_THROW(train(clouds, cfg, unfrozen, make_apprentice(enc)), StateError);
  EXPECT_THROW(train(clouds, cfg, expert, expert), StateError);
  auto bad = cfg;
  bad.epochs = 0;
  EXPECT_THROW(train(clouds, bad, expert, make_apprentice(enc)), ArgumentError);
  bad = cfg;
  bad.learning_rate = 0.0;
  EXPECT_THROW(train(clouds, bad, expert, make_apprentice(enc)), ArgumentError);
  bad = cfg;
  bad.strength_range = std::pair{0.02, 0.01};
  EXPECT_THROW(train(clouds, bad, expert, make_apprentice(enc)), ArgumentError);
}

TEST(Train, NonFiniteLossAborts) {
  auto enc = small_encoder();
  auto expert = make_expert(enc);
  auto apprentice = make_apprentice(enc);
  apprentice.layers.back().bias[0] = std::numeric_limits<double>::infinity();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(washers(2, 1, 1024), cfg, expert, apprentice);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 0"), std::string::npos);
    EXPECT_NE(msg.find("apprentice_norm"), std::string::npos);
  }
}
