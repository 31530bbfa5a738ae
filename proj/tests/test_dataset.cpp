#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "pcad/dataset.hpp"

using namespace pcad;

namespace {

std::vector<ShapeSpec> two_specs(std::size_t n = 2048) {
  std::vector<ShapeSpec> v;
  for (auto k : {ShapeKind::washer, ShapeKind::hex_nut}) {
    auto s = default_shape(k);
    s.n_points = n;
    s.noise_sigma = 0.02;
    v.push_back(s);
  }
  return v;
}

}  // namespace

TEST(Dataset, AddModePositiveRatio) {
  DefectConfig dc;
  dc.strengths = {0.015};
  dc.mode = ModeChoice::add;
  auto splits = make_dataset(two_specs(4000), 2, 2, 10, dc, 3);
  for (const auto& s : splits)
    for (const auto& c : s.test_abnormal) {
      const auto pos = static_cast<long>(c.positive_labels());
      EXPECT_LE(std::abs(pos - 60), 1);
      EXPECT_NEAR(static_cast<double>(pos) / 4000.0, 0.015, 1.0 / 4000.0);
    }
}

TEST(Dataset, AbnormalCloudsAlwaysLabelled) {
  auto splits = make_dataset(two_specs(), 3, 3, 12, DefectConfig{}, 5);
  ASSERT_EQ(splits.size(), 2u);
  for (const auto& s : splits) {
    EXPECT_EQ(s.train_normal.size(), 3u);
    EXPECT_EQ(s.test_normal.size(), 3u);
    ASSERT_EQ(s.test_abnormal.size(), 12u);
    double ratio = 0.0;
    for (const auto& c : s.test_abnormal) {
      ASSERT_TRUE(c.labels);
      EXPECT_GE(c.positive_labels(), 1u);
      ratio += static_cast<double>(c.positive_labels()) / static_cast<double>(c.size());
    }
    ratio /= 12.0;
    EXPECT_GT(ratio, 0.001);
    EXPECT_LT(ratio, 0.05);
    for (const auto& c : s.train_normal) EXPECT_FALSE(c.labels);
  }
}

TEST(Dataset, SplitsDisjointAndReproducible) {
  auto a = make_dataset(two_specs(), 4, 4, 4, DefectConfig{}, 9);
  auto b = make_dataset(two_specs(), 4, 4, 4, DefectConfig{}, 9);
  std::set<std::uint64_t> seen;
  std::size_t total = 0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    for (auto* part : {&a[c].train_normal, &a[c].test_normal, &a[c].test_abnormal})
      for (const auto& cloud : *part) {
        seen.insert(checksum(cloud));
        ++total;
      }
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(checksum(a[c].train_normal[i]), checksum(b[c].train_normal[i]));
      EXPECT_EQ(checksum(a[c].test_abnormal[i]), checksum(b[c].test_abnormal[i]));
    }
  }
  EXPECT_EQ(seen.size(), total);
  auto other = make_dataset(two_specs(), 4, 4, 4, DefectConfig{}, 10);
  EXPECT_NE(checksum(other[0].train_normal[0]), checksum(a[0].train_normal[0]));
}

TEST(Dataset, ManifestRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "pcad_test_dataset";
  std::filesystem::remove_all(dir);
  auto splits = make_dataset(two_specs(1024), 2, 2, 3, DefectConfig{}, 1);
  auto written = write_dataset(splits, 1, dir);
  EXPECT_EQ(written.entries.size(), 2u * 7u);
  auto m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.seed, 1u);
  auto back = load_dataset(m, dir);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(back[c].category, splits[c].category);
    ASSERT_EQ(back[c].test_abnormal.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(checksum(back[c].test_abnormal[i]), checksum(splits[c].test_abnormal[i]));
    for (const auto& t : back[c].test_normal) EXPECT_EQ(t.positive_labels(), 0u);
  }
  EXPECT_THROW(load_manifest(dir / "nope.json"), IoError);
}

TEST(Dataset, Preconditions) {
  EXPECT_THROW(make_dataset(two_specs(), 0, 1, 1, DefectConfig{}, 0), ArgumentError);
  EXPECT_THROW(make_dataset({}, 1, 1, 1, DefectConfig{}, 0), ArgumentError);
  DefectConfig none;
  none.strengths.clear();
  EXPECT_THROW(make_dataset(two_specs(), 1, 1, 1, none, 0), ArgumentError);
}
