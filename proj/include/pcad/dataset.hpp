#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/io.hpp"
#include "pcad/parallel.hpp"
#include "pcad/shapes.hpp"
#include "pcad/spcg.hpp"

namespace pcad {

struct DatasetSplit {
  std::string category;
  std::vector<PointCloud> train_normal;
  std::vector<PointCloud> test_normal;
  std::vector<PointCloud> test_abnormal;  // labels set, >= 1 positive each
  double anomaly_rate = 0.0;              // fraction of normal clouds over all clouds
};

// Held-out defects: SPCG with strengths drawn from `strengths`. The default
// list spans the observed anomaly band and leaves out the training strength.
struct DefectConfig {
  std::vector<double> strengths{0.0078, 0.0103, 0.0128, 0.0178, 0.0203, 0.0228};
  ModeChoice mode = ModeChoice::random;
  SpcgConfig spcg;
};

namespace stream {
inline constexpr std::uint64_t train = 0, test_normal = 1, abnormal_base = 2, defect = 3, strength = 4;
}

// Generates one split per shape. Every cloud draws its own sampling seed from
// (seed, category, stream, index); defect seeds come from a separate stream.
inline std::vector<DatasetSplit> make_dataset(const std::vector<ShapeSpec>& specs, std::size_t n_train,
                                              std::size_t n_test_normal, std::size_t n_test_abnormal,
                                              const DefectConfig& defects, std::uint64_t seed) {
  if (specs.empty()) throw ArgumentError("make_dataset: no shape specs");
  if (n_train < 1 || n_test_normal < 1 || n_test_abnormal < 1) throw ArgumentError("make_dataset: counts must be >= 1");
  if (defects.strengths.empty()) throw ArgumentError("make_dataset: no defect strengths");
  for (const auto& s : specs) validate(s);

  std::vector<DatasetSplit> out(specs.size());
  for (std::size_t c = 0; c < specs.size(); ++c) {
    auto& split = out[c];
    split.category = to_string(specs[c].kind);
    split.train_normal.resize(n_train);
    split.test_normal.resize(n_test_normal);
    split.test_abnormal.resize(n_test_abnormal);
    const std::size_t total = n_train + n_test_normal + n_test_abnormal;
    split.anomaly_rate = static_cast<double>(n_train + n_test_normal) / static_cast<double>(total);

    auto sample = [&](std::uint64_t which, std::size_t i) {
      ShapeSpec s = specs[c];
      s.seed = mix_seed(seed, {c, which, i});
      return make_shape(s);
    };
    parallel_for(total, [&](std::size_t t) {
      if (t < n_train) {
        split.train_normal[t] = sample(stream::train, t);
      } else if (t < n_train + n_test_normal) {
        split.test_normal[t - n_train] = sample(stream::test_normal, t - n_train);
      } else {
        const auto i = t - n_train - n_test_normal;
        const auto base = sample(stream::abnormal_base, i);
        std::mt19937_64 rng(mix_seed(seed, {c, stream::strength, i}));
        const double strength =
            defects.strengths[std::uniform_int_distribution<std::size_t>(0, defects.strengths.size() - 1)(rng)];
        auto syn = generate(base, strength, defects.mode, defects.spcg, mix_seed(seed, {c, stream::defect, i}));
        PointCloud cloud;
        cloud.points = std::move(syn.perturbed.points);
        cloud.labels = std::move(syn.supervision);
        split.test_abnormal[i] = std::move(cloud);
      }
    });
  }
  return out;
}

// ---- manifest ----------------------------------------------------------------

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string split;  // "train" | "test_normal" | "test_abnormal"
  std::string category;
  bool labels = false;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

inline nlohmann::json to_json(const Manifest& m) {
  nlohmann::json j;
  j["format"] = "pcad-manifest";
  j["version"] = 1;
  j["seed"] = m.seed;
  auto& e = j["entries"] = nlohmann::json::array();
  for (const auto& x : m.entries)
    e.push_back({{"path", x.path}, {"split", x.split}, {"category", x.category}, {"labels", x.labels}});
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "pcad-manifest") throw StateError("not a dataset manifest");
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry x{e.at("path").get<std::string>(), e.at("split").get<std::string>(),
                      e.at("category").get<std::string>(), e.at("labels").get<bool>()};
      if (x.split != "train" && x.split != "test_normal" && x.split != "test_abnormal")
        throw StateError("unknown split '" + x.split + "'");
      m.entries.push_back(std::move(x));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw StateError(std::string("malformed manifest: ") + e.what());
  }
}

// Writes every cloud as ply under `dir`/clouds/<category>/ and the manifest
// as `dir`/manifest.json. Returns the manifest.
inline Manifest write_dataset(const std::vector<DatasetSplit>& splits, std::uint64_t seed,
                              const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  Manifest m;
  m.seed = seed;
  std::error_code ec;
  for (const auto& s : splits) {
    fs::create_directories(dir / "clouds" / s.category, ec);
    if (ec) throw IoError("cannot create '" + (dir / "clouds" / s.category).string() + "'");
    auto put = [&](const std::vector<PointCloud>& clouds, const std::string& split) {
      for (std::size_t i = 0; i < clouds.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_%03zu.ply", split.c_str(), i);
        const auto rel = fs::path("clouds") / s.category / name;
        save_cloud(clouds[i], dir / rel, CloudFormat::ply);
        m.entries.push_back({rel.generic_string(), split, s.category, clouds[i].labels.has_value()});
      }
    };
    put(s.train_normal, "train");
    put(s.test_normal, "test_normal");
    put(s.test_abnormal, "test_abnormal");
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write '" + (dir / "manifest.json").string() + "'");
  out << to_json(m).dump(2) << '\n';
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw StateError("malformed manifest '" + path.string() + "': " + e.what());
  }
  return manifest_from_json(j);
}

// Reassembles per-category splits (in first-appearance order) from a manifest.
inline std::vector<DatasetSplit> load_dataset(const Manifest& m, const std::filesystem::path& root) {
  std::vector<DatasetSplit> splits;
  auto find = [&](const std::string& cat) -> DatasetSplit& {
    for (auto& s : splits)
      if (s.category == cat) return s;
    splits.push_back({});
    splits.back().category = cat;
    return splits.back();
  };
  for (const auto& e : m.entries) {
    auto& s = find(e.category);
    auto cloud = load_cloud(root / e.path);
    if (e.split == "train") {
      cloud.labels.reset();
      s.train_normal.push_back(std::move(cloud));
    } else if (e.split == "test_normal") {
      cloud.labels.emplace(cloud.size(), 0);
      s.test_normal.push_back(std::move(cloud));
    } else {
      if (!cloud.labels) throw StateError("abnormal cloud '" + e.path + "' has no anomaly channel");
      s.test_abnormal.push_back(std::move(cloud));
    }
  }
  for (auto& s : splits) {
    const double total = static_cast<double>(s.train_normal.size() + s.test_normal.size() + s.test_abnormal.size());
    s.anomaly_rate = total > 0 ? static_cast<double>(s.train_normal.size() + s.test_normal.size()) / total : 0.0;
  }
  return splits;
}

}  // namespace pcad
