#include "dsrl/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "dsrl/data.hpp"
#include "dsrl/pipeline.hpp"
#include "dsrl/selftest.hpp"
#include "json.hpp"

namespace dsrl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct RunConfig {
  ModelConfig model;
  SynthSpec synth;
  std::string data_dir = "data";
  std::string out_dir = "out";
};

void reject_unknown(const json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ValidationError("config: unknown key '" + item.key() + "' in " + where);
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ValidationError("config file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("malformed config " + path + ": " + e.what());
  }
  reject_unknown(j, {"model", "synth", "paths", "seed"}, "the top level");
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m,
                   {"feature_dim", "hegcn_layers", "beta", "gamma", "sigma", "lambda", "alpha",
                    "standard_attention", "dropout", "epsilon", "lift_radius",
                    "hyper_gate_scale", "epochs", "batch_size", "learning_rate", "ablate",
                    "fixed_threshold"},
                   "'model'");
    maybe(m, "feature_dim", cfg.model.feature_dim);
    maybe(m, "hegcn_layers", cfg.model.hegcn_layers);
    maybe(m, "beta", cfg.model.lshad.beta);
    maybe(m, "gamma", cfg.model.lshad.gamma);
    maybe(m, "sigma", cfg.model.temporal.sigma);
    maybe(m, "lambda", cfg.model.dsi.lambda);
    maybe(m, "alpha", cfg.model.dsi.alpha);
    maybe(m, "standard_attention", cfg.model.dsi.standard_attention);
    maybe(m, "dropout", cfg.model.dropout_rate);
    maybe(m, "epsilon", cfg.model.classifier_eps);
    maybe(m, "lift_radius", cfg.model.lift_radius);
    maybe(m, "hyper_gate_scale", cfg.model.hyper_gate_scale);
    maybe(m, "epochs", cfg.model.epochs);
    maybe(m, "batch_size", cfg.model.batch_size);
    maybe(m, "learning_rate", cfg.model.learning_rate);
    maybe(m, "fixed_threshold", cfg.model.fixed_threshold);
    if (m.contains("ablate"))
      cfg.model.ablate = ablation_from_string(m.at("ablate").get<std::string>());
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown(s,
                   {"num_videos", "t_min", "t_max", "d_visual", "d_audio", "taxonomy_depth",
                    "ambiguity_rate", "noise_scale"},
                   "'synth'");
    maybe(s, "num_videos", cfg.synth.num_videos);
    maybe(s, "t_min", cfg.synth.t_min);
    maybe(s, "t_max", cfg.synth.t_max);
    maybe(s, "d_visual", cfg.synth.d_visual);
    maybe(s, "d_audio", cfg.synth.d_audio);
    maybe(s, "taxonomy_depth", cfg.synth.taxonomy_depth);
    maybe(s, "ambiguity_rate", cfg.synth.ambiguity_rate);
    maybe(s, "noise_scale", cfg.synth.noise_scale);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    reject_unknown(p, {"data_dir", "out_dir"}, "'paths'");
    maybe(p, "data_dir", cfg.data_dir);
    maybe(p, "out_dir", cfg.out_dir);
  }
  if (j.contains("seed")) {
    const uint64_t seed = j.at("seed").get<uint64_t>();
    cfg.model.seed = seed;
    cfg.synth.seed = seed;
  }
  return cfg;
}

// ---- gen ------------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg) {
  cfg.synth.validate();
  const auto data = synth_generate(cfg.synth);
  const fs::path dir(cfg.data_dir);
  fs::create_directories(dir / "features");

  const size_t n = data.size();
  const size_t n_train = static_cast<size_t>(0.70 * static_cast<double>(n));
  const size_t n_val = static_cast<size_t>(0.15 * static_cast<double>(n));
  std::vector<ManifestEntry> manifest;
  size_t counts[3] = {0, 0, 0};
  for (size_t i = 0; i < n; ++i) {
    const std::string split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    counts[i < n_train ? 0 : (i < n_train + n_val ? 1 : 2)] += 1;
    const std::string rel = "features/" + data[i].id + ".dsrf";
    write_feature_file(data[i], dir / rel);
    manifest.push_back({data[i].id, rel, split});
  }
  write_manifest(manifest, dir / "manifest.json");
  std::printf("generated %zu videos (train %zu / val %zu / test %zu) under %s\n", n, counts[0],
              counts[1], counts[2], dir.string().c_str());
  return 0;
}

// ---- train ------------------------------------------------------------------------

std::vector<FeatureSequence> load_split(const fs::path& data_dir,
                                        const std::vector<ManifestEntry>& manifest,
                                        const std::string& split) {
  std::vector<FeatureSequence> out;
  for (const auto& e : manifest) {
    if (e.split != split) continue;
    auto f = read_feature_file(data_dir / e.path);
    f.id = e.id;
    f.validate();
    out.push_back(std::move(f));
  }
  return out;
}

ordered_json epoch_to_json(const EpochLog& log) {
  ordered_json j;
  j["epoch"] = log.epoch;
  j["loss"] = log.loss;
  j["lr"] = log.lr;
  j["val_ap"] = log.val_ap;
  return j;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path data_dir(cfg.data_dir);
  const auto manifest = read_manifest(data_dir / "manifest.json");
  const auto train_set = load_split(data_dir, manifest, "train");
  const auto val_set = load_split(data_dir, manifest, "val");
  if (train_set.empty()) throw ValidationError("train: manifest has no train split");

  const int d_v = train_set[0].visual.cols;
  const int d_a = train_set[0].audio.empty() ? 0 : train_set[0].audio.cols;
  Model model(cfg.model, d_v, d_a);

  ordered_json log = ordered_json::array();
  train(train_set, val_set, model, [&](const EpochLog& e) {
    log.push_back(epoch_to_json(e));
    std::printf("epoch %3d  loss %.6f  lr %.6f  val_ap %.4f\n", e.epoch, e.loss, e.lr, e.val_ap);
  });

  fs::create_directories(cfg.out_dir);
  const fs::path ckpt = fs::path(cfg.out_dir) / "checkpoint.dsrc";
  save_checkpoint(ckpt, model);
  std::ofstream out(fs::path(cfg.out_dir) / "train_log.json", std::ios::trunc);
  out << log.dump(2) << "\n";
  std::printf("checkpoint written to %s\n", ckpt.string().c_str());
  return 0;
}

// ---- eval -------------------------------------------------------------------------

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
  const fs::path ckpt =
      checkpoint.empty() ? fs::path(cfg.out_dir) / "checkpoint.dsrc" : fs::path(checkpoint);
  const Model model = load_checkpoint(ckpt);

  const fs::path data_dir(cfg.data_dir);
  const auto manifest = read_manifest(data_dir / "manifest.json");
  const auto test_set = load_split(data_dir, manifest, "test");
  if (test_set.empty()) throw ValidationError("eval: manifest has no test split");

  const auto report = evaluate(test_set, model);

  fs::create_directories(fs::path(cfg.out_dir) / "curves");
  for (const auto& v : report.videos) {
    std::ofstream csv(fs::path(cfg.out_dir) / "curves" / (v.id + ".csv"), std::ios::trunc);
    csv << "index,score,label\n";
    for (size_t i = 0; i < v.scores.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%d\n", i, v.scores[i],
                    static_cast<int>(v.labels[i]));
      csv << buf;
    }
  }
  ordered_json metrics;
  metrics["ap"] = report.ap;
  metrics["auc"] = report.auc;
  std::ofstream mj(fs::path(cfg.out_dir) / "metrics.json", std::ios::trunc);
  mj << metrics.dump(2) << "\n";
  std::printf("AP %.6f  AUC %.6f  (%zu test videos)\n", report.ap, report.auc,
              report.videos.size());
  return 0;
}

// ---- selftest ------------------------------------------------------------------------

int cmd_selftest() {
  const auto results = run_selftests();
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed();
    std::printf("[%s] %-22s %5d checks, %d failures, worst error %.3e%s%s\n",
                r.passed() ? "PASS" : "FAIL", r.name.c_str(), r.checks, r.failures,
                r.worst_error, r.detail.empty() ? "" : " -- ", r.detail.c_str());
  }
  return ok ? 0 : 3;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"dual-space (Lorentz/Euclidean) weakly supervised sequence anomaly detection"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  uint64_t seed = 0;
  bool seed_set = false;
  int videos_override = -1;
  int epochs_override = -1;
  int batch_override = -1;
  std::string ablate = "none";

  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--out", out_dir, "output directory override");

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset + manifest");
  gen->fallthrough();
  gen->add_option("--videos", videos_override, "number of videos");

  auto* tr = app.add_subcommand("train", "train a model from a manifest");
  tr->fallthrough();
  tr->add_option("--epochs", epochs_override, "epoch count");
  tr->add_option("--batch", batch_override, "batch size");
  tr->add_option("--ablate", ablate, "none|euclidean-only|no-dsi|cosine-dsi|fixed-threshold")
      ->check(CLI::IsMember(
          {"none", "euclidean-only", "no-dsi", "cosine-dsi", "fixed-threshold"}));

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  ev->fallthrough();
  ev->add_option("--checkpoint", checkpoint, "checkpoint path");

  app.add_subcommand("selftest", "run the built-in verification suites")->fallthrough();

  std::vector<const char*> argv;
  argv.push_back("dsrl");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed_set) {
      cfg.model.seed = seed;
      cfg.synth.seed = seed;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (videos_override >= 0) cfg.synth.num_videos = videos_override;
    if (epochs_override >= 0) cfg.model.epochs = epochs_override;
    if (batch_override >= 0) cfg.model.batch_size = batch_override;
    if (tr->count("--ablate") > 0) cfg.model.ablate = ablation_from_string(ablate);

    if (app.got_subcommand("gen")) return cmd_gen(cfg);
    if (app.got_subcommand("train")) return cmd_train(cfg);
    if (app.got_subcommand("eval")) return cmd_eval(cfg, checkpoint);
    if (app.got_subcommand("selftest")) return cmd_selftest();
    throw ValidationError("no subcommand given");
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace dsrl
