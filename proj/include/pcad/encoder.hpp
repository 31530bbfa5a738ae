#pragma once

// Single set-abstraction point encoder: every point gathers its k nearest
// neighbours, each neighbour offset (scaled by the patch radius) runs through
// a shared ReLU stack, the stack output is max-pooled over the neighbours and
// a final linear layer maps the pooled vector to a D-dimensional feature.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "pcad/point_cloud.hpp"
#include "pcad/spatial_index.hpp"

namespace pcad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kDescriptorDim = 3;

// How neighbour rows are built; see describe().
struct DescriptorOptions {
  bool local_frame = false;
  bool scale_channel = false;
  std::size_t input_width() const { return kDescriptorDim + (scale_channel ? 1 : 0); }
  bool operator==(const DescriptorOptions&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

struct EncoderParams {
  std::vector<std::size_t> dims;  // descriptor dim, hidden widths..., feature dim
  std::vector<DenseLayer> layers;  // hidden layers (ReLU) then one linear head
  std::uint64_t seed = 0;
  bool frozen = false;
  DescriptorOptions descriptor;

  std::size_t feature_dim() const { return dims.back(); }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }
};

// Same shape as the parameters it differentiates.
using EncoderGradient = std::vector<DenseLayer>;

inline void validate_dims(std::span<const std::size_t> dims, const DescriptorOptions& opt = {}) {
  if (dims.size() < 3) throw ArgumentError("encoder dims need input, >=1 hidden width and output");
  if (dims.front() != opt.input_width())
    throw ArgumentError("encoder input width must be " + std::to_string(opt.input_width()));
  for (auto d : dims)
    if (d == 0) throw ArgumentError("encoder layer width must be positive");
}

// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn layer by layer
// in row-major order from mt19937_64(seed).
inline EncoderParams init_params(std::span<const std::size_t> dims, std::uint64_t seed, bool frozen,
                                 const DescriptorOptions& opt = {}) {
  validate_dims(dims, opt);
  EncoderParams p;
  p.descriptor = opt;
  p.dims.assign(dims.begin(), dims.end());
  p.seed = seed;
  p.frozen = frozen;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const auto fan_in = dims[l], fan_out = dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Matrix(fan_out, fan_in), Vector(fan_out)};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = u(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline EncoderParams init_params(std::initializer_list<std::size_t> dims, std::uint64_t seed, bool frozen,
                                 const DescriptorOptions& opt = {}) {
  return init_params(std::span<const std::size_t>(dims.begin(), dims.size()), seed, frozen, opt);
}

inline std::uint64_t checksum(const EncoderParams& p) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t len) {
    auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (auto d : p.dims) mix(&d, sizeof d);
  const unsigned char flags[2] = {p.descriptor.local_frame, p.descriptor.scale_channel};
  mix(flags, sizeof flags);
  for (const auto& l : p.layers) {
    mix(l.weight.data(), sizeof(double) * l.weight.size());
    mix(l.bias.data(), sizeof(double) * l.bias.size());
  }
  return h;
}

// Stacked neighbour descriptors: rows [c*k, (c+1)*k) belong to centre c and
// hold (q - p) / r for its k nearest neighbours q (p itself included), where
// r is the largest neighbour offset (1 when the patch is degenerate).
//
// With `local_frame` the offsets are expressed in axes (t, b, n) of the patch:
// n is the smallest-variance PCA direction oriented away from the cloud
// centroid, t is the in-plane direction towards the neighbour mean (largest
// PCA direction when that offset vanishes) and b = n x t. The descriptor is
// then invariant to rigid motions of the whole cloud, not just translations.
//
// With `scale_channel` every row gains a fourth entry r / r_ref - 1, where
// r_ref is the mean patch radius over the whole cloud. Patches
// that lost neighbours (holes) or gained them (bumps) show up there even
// when their normalised shape looks ordinary.
struct Descriptors {
  Matrix rows;
  std::size_t k = 0;
  std::size_t centers = 0;
};

inline Eigen::Matrix3d patch_frame(const std::vector<std::pair<double, Index>>& found, const PointCloud& cloud,
                                   const Vec3& p, const Vec3& center) {
  Vec3 mean = Vec3::Zero();
  for (const auto& f : found) mean += cloud.points[f.second];
  mean /= static_cast<double>(found.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& f : found) {
    const Vec3 d = cloud.points[f.second] - mean;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Vec3 n = solver.eigenvectors().col(0);
  if (n.dot(p - center) < 0.0) n = -n;
  Vec3 offset = mean - p;
  Vec3 t = offset - offset.dot(n) * n;
  const double scale = std::sqrt(std::max(cov.trace(), 0.0) / static_cast<double>(found.size()));
  if (!(t.norm() > 1e-9 * std::max(scale, 1e-300))) t = solver.eigenvectors().col(2);
  t.normalize();
  Eigen::Matrix3d frame;
  frame.row(0) = t.transpose();
  frame.row(1) = n.cross(t).transpose();
  frame.row(2) = n.transpose();
  return frame;
}

inline double reference_radius(const PointCloud& cloud, const SpatialIndex& index, std::size_t k) {
  std::vector<std::pair<double, Index>> found;
  double sum = 0.0;
  for (const auto& p : cloud.points) {
    index.knn_with_distances(p, k, found);
    sum += std::sqrt(found.back().first);
  }
  return sum / static_cast<double>(cloud.size());
}

inline Descriptors describe(const PointCloud& cloud, const SpatialIndex& index, std::span<const Index> centers,
                            std::size_t k, const DescriptorOptions& opt = {}) {
  if (k < 1 || k > cloud.size())
    throw ArgumentError("encode: neighbourhood size " + std::to_string(k) + " exceeds cloud size " +
                        std::to_string(cloud.size()));
  Descriptors d;
  d.k = k;
  d.centers = centers.size();
  d.rows.resize(static_cast<Eigen::Index>(centers.size() * k), static_cast<Eigen::Index>(opt.input_width()));
  const Vec3 center = opt.local_frame ? cloud.centroid() : Vec3::Zero();
  double inv_ref = 0.0;
  if (opt.scale_channel) {
    const double ref = reference_radius(cloud, index, k);
    inv_ref = ref > 0.0 ? 1.0 / ref : 0.0;
  }
  std::vector<std::pair<double, Index>> found;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const Vec3& p = cloud.points[centers[c]];
    index.knn_with_distances(p, k, found);
    double r2 = 0.0;
    for (const auto& f : found) r2 = std::max(r2, f.first);
    const double inv = r2 > 0.0 ? 1.0 / std::sqrt(r2) : 1.0;
    Eigen::Matrix3d frame = Eigen::Matrix3d::Identity();
    if (opt.local_frame && r2 > 0.0) frame = patch_frame(found, cloud, p, center);
    const double scale = opt.scale_channel ? std::sqrt(r2) * inv_ref - 1.0 : 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const Vec3 rel = frame * ((cloud.points[found[j].second] - p) * inv);
      const auto row = static_cast<Eigen::Index>(c * k + j);
      d.rows(row, 0) = rel.x();
      d.rows(row, 1) = rel.y();
      d.rows(row, 2) = rel.z();
      if (opt.scale_channel) d.rows(row, 3) = scale;
    }
  }
  return d;
}

inline Descriptors describe(const PointCloud& cloud, std::size_t k, const DescriptorOptions& opt = {}) {
  if (cloud.empty()) throw EmptyCloudError("encode: empty cloud");
  require_finite(cloud);
  SpatialIndex index(cloud.points);
  IndexList all(cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return describe(cloud, index, all, k, opt);
}

// N x D, row i aligned with centre i.
struct FeatureMap {
  Matrix features;
  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
};

struct ForwardCache {
  std::vector<Matrix> activations;  // input rows, then each hidden layer's ReLU output
  Matrix pooled;                    // centers x last hidden width
  std::vector<std::uint32_t> argmax;  // centers x width, neighbour slot of the max
  std::size_t k = 0;
};

inline void check_shapes(const EncoderParams& p) {
  validate_dims(p.dims, p.descriptor);
  if (p.layers.size() + 1 != p.dims.size()) throw StateError("encoder layer count does not match dims");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    if (static_cast<std::size_t>(L.weight.rows()) != p.dims[l + 1] ||
        static_cast<std::size_t>(L.weight.cols()) != p.dims[l] ||
        static_cast<std::size_t>(L.bias.size()) != p.dims[l + 1])
      throw StateError("encoder layer " + std::to_string(l) + " has inconsistent shape");
  }
}

inline FeatureMap forward(const EncoderParams& params, const Descriptors& desc, ForwardCache* cache = nullptr) {
  check_shapes(params);
  const std::size_t hidden = params.layers.size() - 1;
  const auto k = desc.k;
  const auto nc = static_cast<Eigen::Index>(desc.centers);

  Matrix h = desc.rows;
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(h);
    cache->k = k;
  }
  for (std::size_t l = 0; l < hidden; ++l) {
    const auto& L = params.layers[l];
    Matrix next = h * L.weight.transpose();
    next.rowwise() += L.bias.transpose();
    next = next.cwiseMax(0.0);
    h = std::move(next);
    if (cache) cache->activations.push_back(h);
  }

  const auto width = h.cols();
  Matrix pooled(nc, width);
  std::vector<std::uint32_t> argmax(cache ? static_cast<std::size_t>(nc * width) : 0);
  for (Eigen::Index c = 0; c < nc; ++c) {
    const auto base = c * static_cast<Eigen::Index>(k);
    for (Eigen::Index u = 0; u < width; ++u) {
      double best = h(base, u);
      std::uint32_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        const double v = h(base + static_cast<Eigen::Index>(j), u);
        if (v > best) best = v, arg = static_cast<std::uint32_t>(j);
      }
      pooled(c, u) = best;
      if (cache) argmax[static_cast<std::size_t>(c * width + u)] = arg;
    }
  }

  const auto& head = params.layers.back();
  FeatureMap out;
  out.features = pooled * head.weight.transpose();
  out.features.rowwise() += head.bias.transpose();
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->argmax = std::move(argmax);
  }
  return out;
}

inline FeatureMap encode(const PointCloud& cloud, const EncoderParams& params, std::size_t k) {
  return forward(params, describe(cloud, k, params.descriptor));
}

inline EncoderGradient zero_gradient(const EncoderParams& params) {
  EncoderGradient g;
  for (const auto& l : params.layers)
    g.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return g;
}

// Reverse-mode gradient of sum(upstream .* features) with respect to every
// parameter. Max-pool routes each channel's gradient to its recorded argmax
// neighbour; ReLU passes gradient where its output is positive.
inline EncoderGradient backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& upstream) {
  check_shapes(params);
  const auto nc = cache.pooled.rows();
  if (upstream.rows() != nc || static_cast<std::size_t>(upstream.cols()) != params.feature_dim())
    throw ArgumentError("backward: upstream gradient shape does not match the forward pass");
  const std::size_t hidden = params.layers.size() - 1;
  EncoderGradient grad = zero_gradient(params);

  const auto& head = params.layers.back();
  grad.back().weight.noalias() = upstream.transpose() * cache.pooled;
  grad.back().bias = upstream.colwise().sum().transpose();
  const Matrix g_pooled = upstream * head.weight;

  const auto width = cache.pooled.cols();
  const auto k = static_cast<Eigen::Index>(cache.k);
  Matrix g = Matrix::Zero(nc * k, width);
  for (Eigen::Index c = 0; c < nc; ++c)
    for (Eigen::Index u = 0; u < width; ++u)
      g(c * k + cache.argmax[static_cast<std::size_t>(c * width + u)], u) += g_pooled(c, u);

  for (std::size_t l = hidden; l-- > 0;) {
    const Matrix& out = cache.activations[l + 1];
    const Matrix& in = cache.activations[l];
    g = g.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
    grad[l].weight.noalias() = g.transpose() * in;
    grad[l].bias = g.colwise().sum().transpose();
    if (l > 0) g = g * params.layers[l].weight;
  }
  return grad;
}

inline EncoderGradient encode_backward(const PointCloud& cloud, const EncoderParams& params, std::size_t k,
                                       const Matrix& upstream) {
  const auto desc = describe(cloud, k, params.descriptor);
  ForwardCache cache;
  forward(params, desc, &cache);
  return backward(params, cache, upstream);
}

// Checkpoint (JSON): format tag, version, dims, seed, frozen flag and
// row-major weight arrays. Doubles are written in shortest round-trip form,
// so save/load is bit-exact.
inline nlohmann::json to_json(const EncoderParams& p) {
  nlohmann::json j;
  j["format"] = "pcad-encoder";
  j["version"] = 1;
  j["dims"] = p.dims;
  j["seed"] = p.seed;
  j["frozen"] = p.frozen;
  j["local_frame"] = p.descriptor.local_frame;
  j["scale_channel"] = p.descriptor.scale_channel;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : p.layers) {
    std::vector<double> w(l.weight.data(), l.weight.data() + l.weight.size());
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"rows", l.weight.rows()}, {"cols", l.weight.cols()}, {"weight", w}, {"bias", b}});
  }
  return j;
}

inline EncoderParams params_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "pcad-encoder") throw StateError("not an encoder checkpoint");
    if (j.at("version").get<int>() != 1) throw StateError("unsupported encoder checkpoint version");
    EncoderParams p;
    p.dims = j.at("dims").get<std::vector<std::size_t>>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.frozen = j.at("frozen").get<bool>();
    p.descriptor.local_frame = j.value("local_frame", false);
    p.descriptor.scale_channel = j.value("scale_channel", false);
    for (const auto& lj : j.at("layers")) {
      const auto rows = lj.at("rows").get<Eigen::Index>(), cols = lj.at("cols").get<Eigen::Index>();
      const auto w = lj.at("weight").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
        throw StateError("checkpoint layer arrays do not match rows/cols");
      DenseLayer l{Matrix(rows, cols), Vector(rows)};
      std::copy(w.begin(), w.end(), l.weight.data());
      std::copy(b.begin(), b.end(), l.bias.data());
      p.layers.push_back(std::move(l));
    }
    check_shapes(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw StateError(std::string("malformed encoder checkpoint: ") + e.what());
  }
}

inline void save_params(const EncoderParams& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << to_json(p).dump() << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline EncoderParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw StateError("malformed encoder checkpoint '" + path.string() + "': " + e.what());
  }
  return params_from_json(j);
}

}  // namespace pcad
