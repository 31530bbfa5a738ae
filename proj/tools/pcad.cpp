// pcad: dataset synthesis, defect injection, training, scoring and evaluation.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 invalid configuration or
// arguments, 3 I/O failure, 4 training divergence, 5 checkpoint/cloud
// mismatch, 6 a test category lacks one of the two classes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pcad/config.hpp"

namespace fs = std::filesystem;
using namespace pcad;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "pcad_out";
  double scale = 1.0;
  bool no_sdo = false, no_spcg = false;
  std::string manifest, checkpoint, cloud, expert, category;
  std::optional<double> strength;
  std::string mode;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  c.trainer.seed = c.seed;
  if (o.no_sdo) c.trainer.objective = Objective::distill_only;
  if (o.no_spcg) c.trainer.generator = Generator::jitter;
  return c;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "'");
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw StateError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string config_hash(const RunConfig& c) {
  const auto text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) h = (h ^ ch) * 1099511628211ULL;
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// Linear interpolation between order statistics at rank q * (n - 1).
double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

int cmd_make_dataset(const Options& o) {
  auto cfg = resolve(o);
  apply_scale(cfg.dataset, o.scale);
  const fs::path out = o.out;
  ensure_dir(out);
  auto splits = make_dataset(shape_specs(cfg.dataset), cfg.dataset.n_train, cfg.dataset.n_test_normal,
                             cfg.dataset.n_test_abnormal, cfg.dataset.defects, cfg.seed);
  write_dataset(splits, cfg.seed, out);
  write_json(to_json(cfg), out / "config.json");

  std::cout << "category    train  test_normal  test_abnormal  anomaly_ratio_%(min/mean/max)\n";
  for (const auto& s : splits) {
    double lo = 1.0, hi = 0.0, sum = 0.0;
    for (const auto& c : s.test_abnormal) {
      const double r = static_cast<double>(c.positive_labels()) / static_cast<double>(c.size());
      lo = std::min(lo, r), hi = std::max(hi, r), sum += r;
    }
    const double mean = sum / static_cast<double>(s.test_abnormal.size());
    std::cout << std::left << std::setw(12) << s.category << std::right << std::setw(5) << s.train_normal.size()
              << std::setw(13) << s.test_normal.size() << std::setw(15) << s.test_abnormal.size() << "  "
              << std::fixed << std::setprecision(2) << 100 * lo << " / " << 100 * mean << " / " << 100 * hi
              << '\n';
  }
  std::cout << "manifest: " << (out / "manifest.json").string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  if (o.manifest.empty()) throw ArgumentError("train needs --manifest");
  auto cfg = resolve(o);
  const fs::path out = o.out;
  const auto manifest = load_manifest(o.manifest);
  const auto splits = load_dataset(manifest, fs::path(o.manifest).parent_path());
  ensure_dir(out);

  EncoderParams expert;
  std::string expert_source;
  if (!o.expert.empty() && fs::exists(o.expert)) {
    expert = load_params(o.expert);
    if (!expert.frozen) throw StateError("expert checkpoint '" + o.expert + "' is not frozen");
    expert_source = o.expert;
    cfg.encoder.descriptor = expert.descriptor;
  } else {
    expert = make_expert(cfg.encoder);
    expert_source = "initialized from expert_seed " + std::to_string(cfg.encoder.expert_seed);
    save_params(expert, out / "expert.json");
    std::cerr << "expert: " << expert_source << ", saved to " << (out / "expert.json").string() << '\n';
  }

  json bundle;
  bundle["format"] = "pcad-model";
  bundle["version"] = 1;
  bundle["config"] = to_json(cfg);
  bundle["config_hash"] = config_hash(cfg);
  bundle["expert_source"] = expert_source;
  bundle["ablation"] = {{"no_sdo", o.no_sdo}, {"no_spcg", o.no_spcg}};
  bundle["expert"] = to_json(expert);
  bundle["categories"] = json::array();
  for (const auto& s : splits) {
    if (s.train_normal.empty()) throw StateError("category '" + s.category + "' has no training clouds");
    auto apprentice = init_params(expert.dims, cfg.encoder.apprentice_seed, false, expert.descriptor);
    auto res = train(s.train_normal, cfg.trainer, expert, std::move(apprentice));
    std::ofstream log(out / ("loss_" + s.category + ".csv"));
    if (!log) throw IoError("cannot write loss log");
    log << "step,loss,mean_d_n,mean_d_s\n" << std::setprecision(17);
    for (const auto& l : res.log)
      log << l.step << ',' << l.loss << ',' << l.mean_d_normal << ',' << l.mean_d_synth << '\n';
    bundle["categories"].push_back({{"name", s.category}, {"apprentice", to_json(res.apprentice)}});
    std::cerr << s.category << ": " << res.log.size() << " steps, final loss " << res.log.back().loss << '\n';
  }
  write_json(bundle, out / "model.json");
  std::cout << "model: " << (out / "model.json").string() << '\n';
  return 0;
}

struct Model {
  RunConfig cfg;
  EncoderParams expert;
  std::vector<std::pair<std::string, EncoderParams>> apprentices;
};

// Any malformed bundle is a checkpoint mismatch (exit 5).
Model load_model(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("checkpoint '" + path.string() + "' does not exist");
  const auto j = read_json(path);
  Model m;
  try {
    if (j.at("format").get<std::string>() != "pcad-model") throw StateError("not a pcad model bundle");
    m.cfg = config_from_json(j.at("config"));
    m.expert = params_from_json(j.at("expert"));
    for (const auto& c : j.at("categories"))
      m.apprentices.emplace_back(c.at("name").get<std::string>(), params_from_json(c.at("apprentice")));
  } catch (const json::exception& e) {
    throw StateError(std::string("malformed model bundle: ") + e.what());
  } catch (const ArgumentError& e) {
    throw StateError(std::string("model bundle config invalid: ") + e.what());
  }
  if (m.apprentices.empty()) throw StateError("model bundle holds no apprentices");
  return m;
}

const EncoderParams& apprentice_for(const Model& m, const std::string& category) {
  if (category.empty()) {
    if (m.apprentices.size() == 1) return m.apprentices.front().second;
    throw StateError("model holds several categories; pass --category");
  }
  for (const auto& [name, p] : m.apprentices)
    if (name == category) return p;
  throw StateError("model has no apprentice for category '" + category + "'");
}

int cmd_score(const Options& o) {
  if (o.checkpoint.empty() || o.cloud.empty()) throw ArgumentError("score needs --checkpoint and --cloud");
  const auto model = load_model(o.checkpoint);
  const auto cloud = load_cloud(o.cloud);
  const auto& apprentice = apprentice_for(model, o.category);
  if (cloud.size() <= model.cfg.encoder.k)
    throw StateError("cloud has " + std::to_string(cloud.size()) + " points, not more than k");
  auto report = anomaly_scores(cloud, model.expert, apprentice, model.cfg.encoder.k, model.cfg.eval.score);

  const fs::path out = o.out;
  ensure_dir(out);
  const auto stem = fs::path(o.cloud).stem().string();
  PointCloud scored = cloud;
  scored.scores = report.point_scores;
  save_cloud(scored, out / (stem + ".scores.ply"), CloudFormat::ply);
  const auto& s = report.point_scores;
  json summary = {{"cloud", o.cloud},
                  {"object_score", report.object_score},
                  {"max", *std::max_element(s.begin(), s.end())},
                  {"mean", std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size())},
                  {"p99", percentile(s, 0.99)}};
  write_json(summary, out / (stem + ".scores.json"));
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_evaluate(const Options& o) {
  if (o.checkpoint.empty() || o.manifest.empty()) throw ArgumentError("evaluate needs --checkpoint and --manifest");
  const auto model = load_model(o.checkpoint);
  const auto manifest = load_manifest(o.manifest);
  const auto splits = load_dataset(manifest, fs::path(o.manifest).parent_path());
  BenchmarkResult r;
  for (const auto& s : splits) {
    if (s.test_normal.empty() || s.test_abnormal.empty())
      throw UndefinedMetricError("category '" + s.category + "' lacks normal or abnormal test clouds");
    r.add(s.category, evaluate_category(s, model.expert, apprentice_for(model, s.category), model.cfg.eval));
  }
  r.seed = model.cfg.seed;
  r.config_hash = config_hash(model.cfg);
  r.timestamp = utc_now();
  const fs::path out = o.out;
  ensure_dir(out);
  std::ofstream csv(out / "results.csv");
  if (!csv) throw IoError("cannot write results.csv");
  write_csv(r, csv);
  write_json(to_json(r), out / "results.json");
  write_csv(r, std::cout);
  return 0;
}

int cmd_inject(const Options& o) {
  if (o.cloud.empty()) throw ArgumentError("inject needs --cloud");
  auto cfg = resolve(o);
  auto spcg = cfg.trainer.spcg;
  const double strength = o.strength.value_or(spcg.strength);
  const ModeChoice mode = o.mode.empty() ? spcg.mode : parse_mode_choice(o.mode);
  const auto cloud = load_cloud(o.cloud);
  auto sample = generate(cloud, strength, mode, spcg, cfg.seed);

  const fs::path out = o.out;
  ensure_dir(out);
  const auto stem = fs::path(o.cloud).stem().string();
  PointCloud result;
  result.points = sample.perturbed.points;
  result.labels = sample.supervision;
  save_cloud(result, out / (stem + ".injected.ply"), CloudFormat::ply);
  json summary = {{"mode", to_string(sample.mode)},
                  {"strength", strength},
                  {"budget", sample.budget},
                  {"points_before", cloud.size()},
                  {"points_after", sample.perturbed.size()},
                  {"region_id", sample.region_id},
                  {"labelled_points", result.positive_labels()}};
  write_json(summary, out / (stem + ".injected.json"));
  std::cout << summary.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pcad: point cloud anomaly detection with synthetic defects and spatial discrepancy training"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--seed", o.seed, "global seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
  };
  auto* make = app.add_subcommand("make-dataset", "synthesize a dataset and its manifest");
  common(make);
  make->add_option("--scale", o.scale, "multiply the per-category cloud counts")->capture_default_str();

  auto* tr = app.add_subcommand("train", "train one apprentice per category");
  common(tr);
  tr->add_option("--manifest", o.manifest, "dataset manifest")->required();
  tr->add_option("--expert", o.expert, "frozen expert checkpoint (initialized from the seed when absent)");
  tr->add_flag("--no-sdo", o.no_sdo, "ablation: shrink normal distances only");
  tr->add_flag("--no-spcg", o.no_spcg, "ablation: random region jitter instead of the generator");

  auto* sc = app.add_subcommand("score", "score one cloud");
  common(sc);
  sc->add_option("--checkpoint", o.checkpoint, "model bundle from train")->required();
  sc->add_option("--cloud", o.cloud, "cloud to score (.xyz or .ply)")->required();
  sc->add_option("--category", o.category, "category whose apprentice to use");

  auto* ev = app.add_subcommand("evaluate", "benchmark a model on a manifest's test splits");
  common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "model bundle from train")->required();
  ev->add_option("--manifest", o.manifest, "dataset manifest")->required();

  auto* inj = app.add_subcommand("inject", "apply one synthetic defect to a cloud");
  common(inj);
  inj->add_option("--cloud", o.cloud, "input cloud")->required();
  inj->add_option("--strength", o.strength, "fraction of points to add or remove");
  inj->add_option("--mode", o.mode, "add, remove or random");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*make) return cmd_make_dataset(o);
    if (*tr) return cmd_train(o);
    if (*sc) return cmd_score(o);
    if (*ev) return cmd_evaluate(o);
    if (*inj) return cmd_inject(o);
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const UndefinedMetricError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 6;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const EmptyCloudError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
