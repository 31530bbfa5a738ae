#pragma once

// Run configuration: one JSON tree with dataset, spcg, encoder, trainer and
// eval blocks. Every key is optional; unknown keys and ill-typed values are
// rejected with ArgumentError before any work starts.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcad/pipeline.hpp"

namespace pcad {

struct DatasetConfig {
  std::vector<ShapeKind> categories{ShapeKind::washer, ShapeKind::ring, ShapeKind::hex_nut, ShapeKind::bolt};
  std::size_t n_points = 4096;
  double noise_sigma = 0.02;
  std::size_t n_train = 100;
  std::size_t n_test_normal = 100;
  std::size_t n_test_abnormal = 60;
  DefectConfig defects;
};

struct RunConfig {
  std::uint64_t seed = 42;
  DatasetConfig dataset;
  EncoderConfig encoder;
  TrainConfig trainer;
  EvalConfig eval;

  RunConfig() {
    trainer.epochs = 20;
    trainer.learning_rate = 5e-3;
    trainer.spcg.remove_probability = 0.8;
  }
};

// Counts n * scale rounded to nearest, never below one.
inline std::size_t scaled_count(std::size_t n, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)));
}

inline void apply_scale(DatasetConfig& d, double scale) {
  if (!(scale > 0.0)) throw ArgumentError("--scale must be positive");
  d.n_train = scaled_count(d.n_train, scale);
  d.n_test_normal = scaled_count(d.n_test_normal, scale);
  d.n_test_abnormal = scaled_count(d.n_test_abnormal, scale);
}

inline std::vector<ShapeSpec> shape_specs(const DatasetConfig& d) {
  std::vector<ShapeSpec> specs;
  for (auto k : d.categories) {
    auto s = default_shape(k);
    s.n_points = d.n_points;
    s.noise_sigma = d.noise_sigma;
    specs.push_back(s);
  }
  return specs;
}

namespace detail {

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ArgumentError(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ArgumentError(where_ + "." + key + ": wrong type");
    }
  }

  const nlohmann::json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ArgumentError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::string mode_name(ModeChoice m) {
  switch (m) {
    case ModeChoice::add: return "add";
    case ModeChoice::remove: return "remove";
    case ModeChoice::random: return "random";
  }
  return "random";
}

inline void read_spcg(const nlohmann::json& j, const std::string& where, SpcgConfig& s) {
  Reader r(j, where);
  std::string mode = mode_name(s.mode), curv = s.cluster_curvature == ClusterCurvature::mean ? "mean" : "max";
  r.get("curvature_threshold", s.curvature_threshold);
  r.get("target_cluster_size", s.target_cluster_size);
  r.get("strength", s.strength);
  r.get("mode", mode);
  r.get("remove_probability", s.remove_probability);
  r.get("knn_k", s.knn_k);
  r.get("cluster_curvature", curv);
  r.finish();
  s.mode = parse_mode_choice(mode);
  if (curv != "mean" && curv != "max") throw ArgumentError(where + ".cluster_curvature must be mean or max");
  s.cluster_curvature = curv == "mean" ? ClusterCurvature::mean : ClusterCurvature::max;
  if (!(s.curvature_threshold >= 0.0 && s.curvature_threshold <= 1.0))
    throw ArgumentError(where + ".curvature_threshold outside [0, 1]");
  if (!(s.remove_probability >= 0.0 && s.remove_probability <= 1.0))
    throw ArgumentError(where + ".remove_probability outside [0, 1]");
  if (s.target_cluster_size < 2 || s.knn_k < 3) throw ArgumentError(where + ": cluster size or knn_k too small");
  if (!(s.strength > 0.0 && s.strength < 1.0)) throw ArgumentError(where + ".strength outside (0, 1)");
}

inline nlohmann::json spcg_json(const SpcgConfig& s) {
  return {{"curvature_threshold", s.curvature_threshold},
          {"target_cluster_size", s.target_cluster_size},
          {"strength", s.strength},
          {"mode", mode_name(s.mode)},
          {"remove_probability", s.remove_probability},
          {"knn_k", s.knn_k},
          {"cluster_curvature", s.cluster_curvature == ClusterCurvature::mean ? "mean" : "max"}};
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  detail::Reader top(j, "config");
  top.get("seed", c.seed);

  if (auto* d = top.child("dataset")) {
    detail::Reader r(*d, "dataset");
    std::vector<std::string> cats;
    for (auto k : c.dataset.categories) cats.push_back(to_string(k));
    r.get("categories", cats);
    r.get("n_points", c.dataset.n_points);
    r.get("noise_sigma", c.dataset.noise_sigma);
    r.get("n_train", c.dataset.n_train);
    r.get("n_test_normal", c.dataset.n_test_normal);
    r.get("n_test_abnormal", c.dataset.n_test_abnormal);
    r.get("strengths", c.dataset.defects.strengths);
    std::string mode = detail::mode_name(c.dataset.defects.mode);
    r.get("mode", mode);
    if (auto* s = r.child("spcg")) detail::read_spcg(*s, "dataset.spcg", c.dataset.defects.spcg);
    r.finish();
    c.dataset.defects.mode = parse_mode_choice(mode);
    c.dataset.categories.clear();
    for (const auto& n : cats) c.dataset.categories.push_back(parse_shape_kind(n));
    if (c.dataset.categories.empty()) throw ArgumentError("dataset.categories is empty");
    if (c.dataset.defects.strengths.empty()) throw ArgumentError("dataset.strengths is empty");
    for (double s : c.dataset.defects.strengths)
      if (!(s > 0.0 && s < 1.0)) throw ArgumentError("dataset.strengths entries must lie in (0, 1)");
  }

  if (auto* e = top.child("encoder")) {
    detail::Reader r(*e, "encoder");
    r.get("k", c.encoder.k);
    r.get("hidden", c.encoder.hidden);
    r.get("feature_dim", c.encoder.feature_dim);
    r.get("expert_seed", c.encoder.expert_seed);
    r.get("apprentice_seed", c.encoder.apprentice_seed);
    r.get("local_frame", c.encoder.descriptor.local_frame);
    r.get("scale_channel", c.encoder.descriptor.scale_channel);
    r.finish();
    validate_dims(c.encoder.dims(), c.encoder.descriptor);
    if (c.encoder.k < 2) throw ArgumentError("encoder.k must be >= 2");
  }

  if (auto* t = top.child("trainer")) {
    detail::Reader r(*t, "trainer");
    r.get("epochs", c.trainer.epochs);
    r.get("learning_rate", c.trainer.learning_rate);
    r.get("alpha", c.trainer.alpha);
    r.get("batch_size", c.trainer.batch_size);
    r.get("points_per_cloud", c.trainer.points_per_cloud);
    r.get("weight_cap", c.trainer.weight_cap);
    if (auto* s = r.child("spcg")) detail::read_spcg(*s, "trainer.spcg", c.trainer.spcg);
    r.finish();
  }
  c.trainer.k = c.encoder.k;
  validate(c.trainer);

  if (auto* v = top.child("eval")) {
    detail::Reader r(*v, "eval");
    std::string agg = c.eval.score.aggregation == Aggregation::max ? "max" : "top_fraction";
    std::string pool = c.eval.pooling == PointPooling::global ? "global" : "per_object";
    r.get("aggregation", agg);
    r.get("top_fraction", c.eval.score.top_fraction);
    r.get("pooling", pool);
    r.finish();
    if (agg != "max" && agg != "top_fraction") throw ArgumentError("eval.aggregation must be max or top_fraction");
    if (pool != "global" && pool != "per_object") throw ArgumentError("eval.pooling must be global or per_object");
    c.eval.score.aggregation = agg == "max" ? Aggregation::max : Aggregation::top_fraction;
    c.eval.pooling = pool == "global" ? PointPooling::global : PointPooling::per_object;
    if (!(c.eval.score.top_fraction > 0.0 && c.eval.score.top_fraction <= 1.0))
      throw ArgumentError("eval.top_fraction must lie in (0, 1]");
  }
  c.eval.k = c.encoder.k;
  top.finish();
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  std::vector<std::string> cats;
  for (auto k : c.dataset.categories) cats.push_back(to_string(k));
  j["dataset"] = {{"categories", cats},
                  {"n_points", c.dataset.n_points},
                  {"noise_sigma", c.dataset.noise_sigma},
                  {"n_train", c.dataset.n_train},
                  {"n_test_normal", c.dataset.n_test_normal},
                  {"n_test_abnormal", c.dataset.n_test_abnormal},
                  {"strengths", c.dataset.defects.strengths},
                  {"mode", detail::mode_name(c.dataset.defects.mode)},
                  {"spcg", detail::spcg_json(c.dataset.defects.spcg)}};
  j["encoder"] = {{"k", c.encoder.k},
                  {"hidden", c.encoder.hidden},
                  {"feature_dim", c.encoder.feature_dim},
                  {"expert_seed", c.encoder.expert_seed},
                  {"apprentice_seed", c.encoder.apprentice_seed},
                  {"local_frame", c.encoder.descriptor.local_frame},
                  {"scale_channel", c.encoder.descriptor.scale_channel}};
  j["trainer"] = {{"epochs", c.trainer.epochs},
                  {"learning_rate", c.trainer.learning_rate},
                  {"alpha", c.trainer.alpha},
                  {"batch_size", c.trainer.batch_size},
                  {"points_per_cloud", c.trainer.points_per_cloud},
                  {"weight_cap", c.trainer.weight_cap},
                  {"spcg", detail::spcg_json(c.trainer.spcg)}};
  j["eval"] = {{"aggregation", c.eval.score.aggregation == Aggregation::max ? "max" : "top_fraction"},
               {"top_fraction", c.eval.score.top_fraction},
               {"pooling", c.eval.pooling == PointPooling::global ? "global" : "per_object"}};
  return j;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

}  // namespace pcad
