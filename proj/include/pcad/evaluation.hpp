#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/dataset.hpp"
#include "pcad/metrics.hpp"
#include "pcad/sdo.hpp"

namespace pcad {

enum class PointPooling { global, per_object };

struct EvalConfig {
  std::size_t k = 16;
  ScoreConfig score;
  PointPooling pooling = PointPooling::global;
};

struct CategoryMetrics {
  double object_auroc = 0.0, object_aupr = 0.0;
  double point_auroc = 0.0, point_aupr = 0.0;
};

struct BenchmarkResult {
  std::map<std::string, CategoryMetrics> per_category;
  std::vector<std::string> order;  // insertion order of categories
  CategoryMetrics mean;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string timestamp;

  void add(const std::string& category, const CategoryMetrics& m) {
    if (!per_category.count(category)) order.push_back(category);
    per_category[category] = m;
    recompute_mean();
  }

  void recompute_mean() {
    mean = {};
    if (per_category.empty()) return;
    for (const auto& [name, m] : per_category) {
      mean.object_auroc += m.object_auroc;
      mean.object_aupr += m.object_aupr;
      mean.point_auroc += m.point_auroc;
      mean.point_aupr += m.point_aupr;
    }
    const double n = static_cast<double>(per_category.size());
    mean.object_auroc /= n;
    mean.object_aupr /= n;
    mean.point_auroc /= n;
    mean.point_aupr /= n;
  }
};

// Scored test split: one report per cloud, normal clouds first.
struct ScoredSplit {
  std::vector<ScoreReport> reports;
  std::vector<std::uint8_t> object_labels;
  std::vector<std::vector<std::uint8_t>> point_labels;
};

inline ScoredSplit score_split(const DatasetSplit& split, const EncoderParams& expert, const EncoderParams& apprentice,
                               const EvalConfig& cfg) {
  if (split.test_normal.empty() && split.test_abnormal.empty()) throw ArgumentError("evaluate: empty test split");
  std::vector<const PointCloud*> clouds;
  ScoredSplit out;
  for (const auto& c : split.test_normal) {
    clouds.push_back(&c);
    out.object_labels.push_back(0);
    out.point_labels.emplace_back(c.size(), 0);
  }
  for (const auto& c : split.test_abnormal) {
    if (!c.labels || c.labels->size() != c.size()) throw StateError("abnormal test cloud lacks point labels");
    clouds.push_back(&c);
    out.object_labels.push_back(1);
    out.point_labels.push_back(*c.labels);
  }
  out.reports.resize(clouds.size());
  parallel_for(clouds.size(), [&](std::size_t i) {
    out.reports[i] = anomaly_scores(*clouds[i], expert, apprentice, cfg.k, cfg.score);
  });
  return out;
}

inline CategoryMetrics metrics_of(const ScoredSplit& s, PointPooling pooling) {
  CategoryMetrics m;
  std::vector<double> objects;
  for (const auto& r : s.reports) objects.push_back(r.object_score);
  m.object_auroc = auroc(objects, s.object_labels);
  m.object_aupr = aupr(objects, s.object_labels);
  if (pooling == PointPooling::global) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    for (std::size_t i = 0; i < s.reports.size(); ++i) {
      scores.insert(scores.end(), s.reports[i].point_scores.begin(), s.reports[i].point_scores.end());
      labels.insert(labels.end(), s.point_labels[i].begin(), s.point_labels[i].end());
    }
    m.point_auroc = auroc(scores, labels);
    m.point_aupr = aupr(scores, labels);
  } else {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.reports.size(); ++i) {
      if (!s.object_labels[i]) continue;
      m.point_auroc += auroc(s.reports[i].point_scores, s.point_labels[i]);
      m.point_aupr += aupr(s.reports[i].point_scores, s.point_labels[i]);
      ++n;
    }
    if (n == 0) throw UndefinedMetricError("per-object point metrics need abnormal clouds");
    m.point_auroc /= static_cast<double>(n);
    m.point_aupr /= static_cast<double>(n);
  }
  return m;
}

// Object level: object score per test cloud against its cloud label.
// Point level: per-point scores against point labels, pooled over all test
// clouds or averaged over abnormal clouds.
inline CategoryMetrics evaluate_category(const DatasetSplit& split, const EncoderParams& expert,
                                         const EncoderParams& apprentice, const EvalConfig& cfg) {
  return metrics_of(score_split(split, expert, apprentice, cfg), cfg.pooling);
}

inline BenchmarkResult evaluate(const DatasetSplit& split, const EncoderParams& expert, const EncoderParams& apprentice,
                                const EvalConfig& cfg) {
  BenchmarkResult r;
  r.add(split.category, evaluate_category(split, expert, apprentice, cfg));
  return r;
}

inline void write_csv(const BenchmarkResult& r, std::ostream& out) {
  out << "category,object_auroc,object_aupr,point_auroc,point_aupr\n";
  auto row = [&](const std::string& name, const CategoryMetrics& m) {
    out << name << ',' << detail::fmt(m.object_auroc) << ',' << detail::fmt(m.object_aupr) << ','
        << detail::fmt(m.point_auroc) << ',' << detail::fmt(m.point_aupr) << '\n';
  };
  for (const auto& name : r.order) row(name, r.per_category.at(name));
  row("mean", r.mean);
}

inline nlohmann::json to_json(const CategoryMetrics& m) {
  return {{"object_auroc", m.object_auroc},
          {"object_aupr", m.object_aupr},
          {"point_auroc", m.point_auroc},
          {"point_aupr", m.point_aupr}};
}

inline nlohmann::json to_json(const BenchmarkResult& r) {
  nlohmann::json j;
  j["per_category"] = nlohmann::json::object();
  for (const auto& name : r.order) j["per_category"][name] = to_json(r.per_category.at(name));
  j["mean"] = to_json(r.mean);
  j["metadata"] = {{"seed", r.seed}, {"config_hash", r.config_hash}, {"timestamp", r.timestamp}};
  return j;
}

}  // namespace pcad
