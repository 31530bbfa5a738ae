#pragma once

// Dataset -> per-category training -> evaluation, shared by the CLI and the
// acceptance suite.

#include <vector>

#include "pcad/dataset.hpp"
#include "pcad/evaluation.hpp"
#include "pcad/sdo.hpp"

namespace pcad {

struct EncoderConfig {
  std::size_t k = 16;
  std::vector<std::size_t> hidden{32, 32};
  std::size_t feature_dim = 64;
  std::uint64_t expert_seed = 1;
  std::uint64_t apprentice_seed = 2;
  DescriptorOptions descriptor{true, true};

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d{descriptor.input_width()};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(feature_dim);
    return d;
  }
};

inline EncoderParams make_expert(const EncoderConfig& e) {
  return init_params(e.dims(), e.expert_seed, true, e.descriptor);
}

inline EncoderParams make_apprentice(const EncoderConfig& e) {
  return init_params(e.dims(), e.apprentice_seed, false, e.descriptor);
}

struct CategoryModel {
  std::string category;
  EncoderParams apprentice;
  std::vector<StepLog> log;
};

// Trains one apprentice per category against the shared expert.
inline std::vector<CategoryModel> train_all(const std::vector<DatasetSplit>& splits, const EncoderParams& expert,
                                            const EncoderConfig& enc, TrainConfig cfg) {
  cfg.k = enc.k;
  std::vector<CategoryModel> models(splits.size());
  parallel_for(splits.size(), [&](std::size_t c) {
    auto res = train(splits[c].train_normal, cfg, expert, make_apprentice(enc));
    models[c] = {splits[c].category, std::move(res.apprentice), std::move(res.log)};
  });
  return models;
}

inline BenchmarkResult evaluate_all(const std::vector<DatasetSplit>& splits, const EncoderParams& expert,
                                    const std::vector<CategoryModel>& models, EvalConfig cfg, std::size_t k) {
  cfg.k = k;
  BenchmarkResult r;
  std::vector<CategoryMetrics> metrics(splits.size());
  for (std::size_t c = 0; c < splits.size(); ++c)
    metrics[c] = evaluate_category(splits[c], expert, models[c].apprentice, cfg);
  for (std::size_t c = 0; c < splits.size(); ++c) r.add(splits[c].category, metrics[c]);
  return r;
}

}  // namespace pcad
