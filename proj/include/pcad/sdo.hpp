#pragma once

// Expert/apprentice discrepancy training and scoring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pcad/encoder.hpp"
#include "pcad/parallel.hpp"
#include "pcad/spcg.hpp"

namespace pcad {

// Per-row Euclidean distance between aligned feature maps.
inline std::vector<double> point_distances(const FeatureMap& apprentice, const FeatureMap& expert) {
  if (apprentice.features.rows() != expert.features.rows() || apprentice.features.cols() != expert.features.cols())
    throw ArgumentError("point_distances: feature maps differ in shape");
  std::vector<double> d(apprentice.rows());
  for (Eigen::Index i = 0; i < apprentice.features.rows(); ++i)
    d[static_cast<std::size_t>(i)] = (apprentice.features.row(i) - expert.features.row(i)).norm();
  return d;
}

struct MaskSplit {
  std::vector<double> normal;
  std::vector<double> synth;
};

inline MaskSplit split_by_mask(std::span<const double> distances, std::span<const std::uint8_t> mask) {
  if (distances.size() != mask.size()) throw ArgumentError("split_by_mask: length mismatch");
  MaskSplit s;
  for (std::size_t i = 0; i < distances.size(); ++i) (mask[i] ? s.synth : s.normal).push_back(distances[i]);
  return s;
}

enum class Role { normal, synth };

// w_i = (d_i * N / sum(d))^(+alpha) for normal points and ^(-alpha) for
// synthetic-defect points; the sum runs over the same role's distances.
// A list whose distances are all zero gets unit weights. Every weight is
// clamped to `cap`, which bounds the 0^(-alpha) singularity.
inline std::vector<double> focal_weights(std::span<const double> distances, double alpha, Role role,
                                         double cap = 1e3) {
  if (!(alpha >= 0.0)) throw ArgumentError("focal_weights: alpha must be >= 0");
  std::vector<double> w(distances.size(), 1.0);
  const double sum = std::accumulate(distances.begin(), distances.end(), 0.0);
  if (!(sum > 0.0)) return w;
  // all equal: every ratio is exactly 1, which sum / n need not reproduce
  const auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
  if (*lo == *hi) return w;
  const double n = static_cast<double>(distances.size());
  const double exponent = role == Role::normal ? alpha : -alpha;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    const double ratio = distances[i] * n / sum;
    w[i] = std::min(cap, std::pow(ratio, exponent));
  }
  return w;
}

struct DiscrepancyBatch {
  std::vector<double> d_normal, d_synth;
  std::vector<double> w_normal, w_synth;
  double alpha = 0.01;
};

inline DiscrepancyBatch make_batch(std::vector<double> d_normal, std::vector<double> d_synth, double alpha,
                                   double cap = 1e3) {
  DiscrepancyBatch b;
  b.w_normal = focal_weights(d_normal, alpha, Role::normal, cap);
  b.w_synth = focal_weights(d_synth, alpha, Role::synth, cap);
  b.d_normal = std::move(d_normal);
  b.d_synth = std::move(d_synth);
  b.alpha = alpha;
  return b;
}

// (sum w_n d_n - sum w_s d_s) / (sum w_n + sum w_s). With no synthetic
// points this is the weighted mean of the normal distances.
inline double sdo_loss(const DiscrepancyBatch& b) {
  if (b.d_normal.empty() && b.d_synth.empty()) throw ArgumentError("sdo_loss: empty batch");
  if (b.d_normal.size() != b.w_normal.size() || b.d_synth.size() != b.w_synth.size())
    throw ArgumentError("sdo_loss: weights and distances differ in length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < b.d_normal.size(); ++i) num += b.w_normal[i] * b.d_normal[i], den += b.w_normal[i];
  for (std::size_t j = 0; j < b.d_synth.size(); ++j) num -= b.w_synth[j] * b.d_synth[j], den += b.w_synth[j];
  if (!(den > 0.0)) throw ArgumentError("sdo_loss: weights sum to zero");
  return num / den;
}

// dL/dd at fixed weights: +w_n/W for normal points, -w_s/W for synthetic ones.
struct LossGradient {
  std::vector<double> d_normal, d_synth;
};

inline LossGradient sdo_loss_gradient(const DiscrepancyBatch& b) {
  double den = 0.0;
  for (double w : b.w_normal) den += w;
  for (double w : b.w_synth) den += w;
  if (!(den > 0.0)) throw ArgumentError("sdo_loss: weights sum to zero");
  LossGradient g;
  for (double w : b.w_normal) g.d_normal.push_back(w / den);
  for (double w : b.w_synth) g.d_synth.push_back(-w / den);
  return g;
}

enum class Aggregation { top_fraction, max };

struct ScoreConfig {
  Aggregation aggregation = Aggregation::top_fraction;
  double top_fraction = 0.01;
};

struct ScoreReport {
  std::string cloud_id;
  std::vector<double> point_scores;
  double object_score = 0.0;
};

// Mean of the ceil(fraction * N) largest scores (at least one), or the max.
inline double aggregate_scores(std::span<const double> scores, const ScoreConfig& cfg) {
  if (scores.empty()) throw ArgumentError("aggregate_scores: no scores");
  if (cfg.aggregation == Aggregation::max) return *std::max_element(scores.begin(), scores.end());
  if (!(cfg.top_fraction > 0.0 && cfg.top_fraction <= 1.0)) throw ArgumentError("top_fraction must lie in (0, 1]");
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(cfg.top_fraction * static_cast<double>(scores.size()))));
  std::vector<double> v(scores.begin(), scores.end());
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n - 1), v.end(), std::greater<>());
  return std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

// Per-point score = ||expert feature - apprentice feature||.
inline ScoreReport anomaly_scores(const PointCloud& cloud, const EncoderParams& expert,
                                  const EncoderParams& apprentice, std::size_t k, const ScoreConfig& cfg = {}) {
  if (expert.dims != apprentice.dims) throw StateError("expert and apprentice dims differ");
  check_shapes(expert);
  check_shapes(apprentice);
  if (cloud.size() < k) throw StateError("cloud has fewer points than the neighbourhood size");
  if (expert.descriptor != apprentice.descriptor) throw StateError("expert and apprentice descriptors differ");
  const auto desc = describe(cloud, k, expert.descriptor);
  ScoreReport r;
  r.point_scores = point_distances(forward(apprentice, desc), forward(expert, desc));
  r.object_score = aggregate_scores(r.point_scores, cfg);
  return r;
}

// ---- training ---------------------------------------------------------------

enum class Generator { spcg, jitter };
enum class Objective { sdo, distill_only };

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  double alpha = 0.01;
  std::size_t batch_size = 4;          // clouds per optimiser step
  std::size_t points_per_cloud = 512;  // sampled clean points per cloud; 0 = all
  double weight_cap = 1e3;
  std::uint64_t seed = 0;
  std::size_t k = 16;  // encoder neighbourhood
  SpcgConfig spcg;
  // When set, each synthetic sample draws its strength uniformly from this
  // range instead of using spcg.strength.
  std::optional<std::pair<double, double>> strength_range;
  Generator generator = Generator::spcg;
  Objective objective = Objective::sdo;
};

struct StepLog {
  std::size_t step = 0;
  double loss = 0.0;
  double mean_d_normal = 0.0;
  double mean_d_synth = 0.0;
};

inline void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (!(c.learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
  if (!(c.alpha >= 0.0)) throw ArgumentError("alpha must be >= 0");
  if (c.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (!(c.weight_cap > 0.0)) throw ArgumentError("weight_cap must be > 0");
  if (c.k < 1) throw ArgumentError("k must be >= 1");
  if (c.strength_range && !(c.strength_range->first > 0.0 && c.strength_range->first <= c.strength_range->second &&
                            c.strength_range->second < 1.0))
    throw ArgumentError("strength_range must satisfy 0 < lo <= hi < 1");
}

// Adam with bias correction, applied layer by layer.
class Adam {
 public:
  Adam(const EncoderParams& p, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(zero_gradient(p)), v_(zero_gradient(p)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(EncoderParams& p, const EncoderGradient& g) {
    if (p.frozen) throw StateError("refusing to update frozen parameters");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& grad) {
      m = b1_ * m + (1.0 - b1_) * grad;
      v = b2_ * v + (1.0 - b2_) * grad.cwiseProduct(grad);
      param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      update(p.layers[l].weight, m_[l].weight, v_[l].weight, g[l].weight);
      update(p.layers[l].bias, m_[l].bias, v_[l].bias, g[l].bias);
    }
  }

 private:
  EncoderGradient m_, v_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

// Loss, distance means and apprentice gradient for one perturbed cloud,
// evaluated on the supplied centres. `labels[c]` flags synthetic-defect centres.
struct CloudStep {
  double loss = 0.0;
  double mean_d_normal = 0.0, mean_d_synth = 0.0;
  EncoderGradient grad;
};

inline CloudStep discrepancy_step(const PointCloud& cloud, const SpatialIndex& index, std::span<const Index> centers,
                                  std::span<const std::uint8_t> labels, const EncoderParams& expert,
                                  const EncoderParams& apprentice, const TrainConfig& cfg) {
  const auto desc = describe(cloud, index, centers, cfg.k, expert.descriptor);
  const FeatureMap fe = forward(expert, desc);
  ForwardCache cache;
  const FeatureMap fa = forward(apprentice, desc, &cache);
  const auto d = point_distances(fa, fe);

  std::vector<std::uint8_t> mask(labels.begin(), labels.end());
  if (cfg.objective == Objective::distill_only) std::fill(mask.begin(), mask.end(), 0);
  auto split = split_by_mask(d, mask);
  CloudStep out;
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  out.mean_d_normal = mean(split.normal);
  out.mean_d_synth = mean(split.synth);
  const auto batch = make_batch(std::move(split.normal), std::move(split.synth), cfg.alpha, cfg.weight_cap);
  out.loss = sdo_loss(batch);
  const auto dl = sdo_loss_gradient(batch);

  Matrix upstream = Matrix::Zero(fa.features.rows(), fa.features.cols());
  for (std::size_t i = 0, in = 0, is = 0; i < d.size(); ++i) {
    const double g = mask[i] ? dl.d_synth[is++] : dl.d_normal[in++];
    if (d[i] > 0.0)
      upstream.row(static_cast<Eigen::Index>(i)) =
          g / d[i] * (fa.features.row(static_cast<Eigen::Index>(i)) - fe.features.row(static_cast<Eigen::Index>(i)));
  }
  out.grad = backward(apprentice, cache, upstream);
  return out;
}

// Unlabelled points whose k-neighbourhood reaches a labelled one. Their
// patches see part of the defect, so they are neither clean nor synthetic
// and are left out of the clean sample.
inline std::vector<std::uint8_t> defect_halo(const PointCloud& cloud, const SpatialIndex& index,
                                             std::span<const std::uint8_t> labels, std::size_t k) {
  std::vector<std::uint8_t> halo(cloud.size(), 0);
  if (std::find(labels.begin(), labels.end(), std::uint8_t{1}) == labels.end()) return halo;
  std::vector<std::pair<double, Index>> found;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (labels[i]) continue;
    index.knn_with_distances(cloud.points[i], k, found);
    for (const auto& f : found)
      if (labels[f.second]) {
        halo[i] = 1;
        break;
      }
  }
  return halo;
}

// Every labelled point plus up to `n_clean` distinct clean points drawn
// uniformly from those neither labelled nor in `halo` (all of them when
// n_clean is 0 or exceeds the pool). Sorted ascending.
inline IndexList training_centers(std::span<const std::uint8_t> labels, std::span<const std::uint8_t> halo,
                                  std::size_t n_clean, std::mt19937_64& rng) {
  IndexList pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i])
      pos.push_back(i);
    else if (halo.empty() || !halo[i])
      neg.push_back(i);
  }
  if (n_clean > 0 && n_clean < neg.size()) {
    for (std::size_t i = 0; i < n_clean; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, neg.size() - 1);
      std::swap(neg[i], neg[pick(rng)]);
    }
    neg.resize(n_clean);
  }
  pos.insert(pos.end(), neg.begin(), neg.end());
  std::sort(pos.begin(), pos.end());
  return pos;
}

inline SynthSample training_sample(const PointCloud& cloud, const TrainConfig& cfg, std::uint64_t seed) {
  double strength = cfg.spcg.strength;
  if (cfg.strength_range) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    strength = std::uniform_real_distribution<double>(cfg.strength_range->first, cfg.strength_range->second)(rng);
  }
  if (cfg.generator == Generator::jitter) return jitter_region(cloud, strength, seed);
  return generate(cloud, strength, cfg.spcg.mode, cfg.spcg, seed);
}

struct TrainResult {
  EncoderParams apprentice;
  std::vector<StepLog> log;
};

inline double parameter_norm(const EncoderParams& p) {
  double s = 0.0;
  for (const auto& l : p.layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return std::sqrt(s);
}

// Trains `apprentice` against the frozen `expert`. Each epoch visits the
// clouds in order; every cloud yields one synthetic sample whose loss
// gradient is averaged over `batch_size` clouds before an Adam step. Clouds
// within a batch are processed concurrently and reduced in cloud order.
inline TrainResult train(std::span<const PointCloud> train_clouds, const TrainConfig& cfg, const EncoderParams& expert,
                         EncoderParams apprentice, const std::function<void(const StepLog&)>& on_step = {}) {
  validate(cfg);
  if (train_clouds.empty()) throw ArgumentError("train: no training clouds");
  if (!expert.frozen) throw StateError("train: expert parameters must be frozen");
  if (apprentice.frozen) throw StateError("train: apprentice parameters must not be frozen");
  if (expert.dims != apprentice.dims || expert.descriptor != apprentice.descriptor)
    throw StateError("train: expert and apprentice architectures differ");
  check_shapes(apprentice);

  // Geometry of the clean clouds is fixed, so estimate it once.
  std::vector<PointCloud> clouds(train_clouds.size());
  parallel_for(clouds.size(), [&](std::size_t i) {
    const auto& c = train_clouds[i];
    if (c.size() <= std::max(cfg.k, cfg.spcg.knn_k)) throw ArgumentError("train: cloud smaller than neighbourhood");
    SpatialIndex index(c.points);
    clouds[i] = with_geometry(c, cfg.spcg.knn_k, index);
  });

  Adam opt(apprentice, cfg.learning_rate);
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t first = 0; first < clouds.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, clouds.size() - first);
      std::vector<CloudStep> parts(count);
      parallel_for(count, [&](std::size_t b) {
        const std::size_t ci = first + b;
        const auto sample = training_sample(clouds[ci], cfg, mix_seed(cfg.seed, {epoch, ci, 0x5bc9ULL}));
        std::mt19937_64 rng(mix_seed(cfg.seed, {epoch, ci, 0xc3e7ULL}));
        SpatialIndex index(sample.perturbed.points);
        const auto halo = defect_halo(sample.perturbed, index, sample.supervision, cfg.k);
        auto centers = training_centers(sample.supervision, halo, cfg.points_per_cloud, rng);
        std::vector<std::uint8_t> labels(centers.size());
        for (std::size_t c = 0; c < centers.size(); ++c) labels[c] = sample.supervision[centers[c]];
        parts[b] = discrepancy_step(sample.perturbed, index, centers, labels, expert, apprentice, cfg);
      });

      StepLog log;
      log.step = step;
      EncoderGradient grad = zero_gradient(apprentice);
      for (const auto& p : parts) {
        log.loss += p.loss;
        log.mean_d_normal += p.mean_d_normal;
        log.mean_d_synth += p.mean_d_synth;
        for (std::size_t l = 0; l < grad.size(); ++l) {
          grad[l].weight += p.grad[l].weight;
          grad[l].bias += p.grad[l].bias;
        }
      }
      const double inv = 1.0 / static_cast<double>(count);
      log.loss *= inv;
      log.mean_d_normal *= inv;
      log.mean_d_synth *= inv;
      for (auto& g : grad) {
        g.weight *= inv;
        g.bias *= inv;
      }
      if (!std::isfinite(log.loss)) {
        std::ostringstream msg;
        msg << "training diverged at step " << step << ": loss=" << log.loss
            << " apprentice_norm=" << parameter_norm(apprentice) << " expert_norm=" << parameter_norm(expert);
        throw DivergenceError(msg.str());
      }
      opt.step(apprentice, grad);
      result.log.push_back(log);
      if (on_step) on_step(log);
      ++step;
    }
  }
  result.apprentice = std::move(apprentice);
  return result;
}

// Same, with a fresh apprentice of the expert's architecture seeded from cfg.seed.
inline TrainResult train(std::span<const PointCloud> train_clouds, const TrainConfig& cfg, const EncoderParams& expert,
                         const std::function<void(const StepLog&)>& on_step = {}) {
  auto apprentice = init_params(expert.dims, mix_seed(cfg.seed, {0xa11ceULL}), false, expert.descriptor);
  return train(train_clouds, cfg, expert, std::move(apprentice), on_step);
}

}  // namespace pcad
