#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dsrl/data.hpp"
#include "dsrl/dsi.hpp"
#include "dsrl/graphs.hpp"
#include "dsrl/hypernn.hpp"
#include "dsrl/optimizer.hpp"

namespace dsrl {

// End-to-end model: preprocessing, the Euclidean and hyperbolic branches
// (each semantic + temporal), DSI fusion, hyperbolic classification and the
// MIL objective.

enum class Ablation {
  kNone,
  kEuclideanOnly,   // GCN baseline, no hyperbolic branch, no DSI
  kNoDsi,           // both branches, concat/max-pool without interaction
  kCosineDsi,       // DSI with cosine instead of Lorentzian similarity
  kFixedThreshold,  // HE-GCN with a constant theta instead of LSHAD
};

Ablation ablation_from_string(const std::string& s);
std::string to_string(Ablation a);

struct ModelConfig {
  int feature_dim = 32;  // d; each sub-branch carries d/2
  int hegcn_layers = 2;
  LshadParams lshad;       // beta 0.8, gamma 1.2
  TemporalParams temporal; // sigma = e
  DsiParams dsi;           // lambda 0.8, alpha 0.3
  double dropout_rate = 0.6;
  double classifier_eps = 1.0;
  // Lift conditioning: features are rescaled so the mean hyperbolic radius
  // sits near this value (relative radii preserved). Keeps similarities in
  // the LSHAD working range however far training drifts the feature scale.
  double lift_radius = 1.5;
  // Gate scale lambda of the activation_norm phi in the pipeline's layers;
  // spreads points over radii ~asinh(lambda/2) instead of a thin shell.
  double hyper_gate_scale = 4.0;
  int epochs = 30;
  int batch_size = 8;  // paper-scale runs use 256
  double learning_rate = 0.001;
  uint64_t seed = 1;
  Ablation ablate = Ablation::kNone;
  double fixed_threshold = 0.5;
  bool debug_manifold_checks = false;

  void validate() const;
};

struct DetectionScores {
  std::vector<double> snippet_scores;  // length T, each in (0,1)
  double video_score = 0.0;            // mean of the top-k snippet scores
  int k_used = 0;                      // floor(T/16) + 1
};

// k = floor(T/16) + 1; returns (mean of the k largest scores, k).
std::pair<double, int> mil_video_score(std::span<const double> snippet_scores);

// -(1/N) sum [y log p + (1-y) log(1-p)], logs clamped at 1e-12.
double bce_loss(std::span<const double> preds, std::span<const uint8_t> labels);

class Model {
 public:
  Model(ModelConfig cfg, int d_visual, int d_audio);

  const ModelConfig& config() const { return cfg_; }
  int d_visual() const { return d_v_; }
  int d_audio() const { return d_a_; }

  std::vector<diff::Parameter>& params() { return params_; }
  const std::vector<diff::Parameter>& params() const { return params_; }
  const diff::Parameter& param(const std::string& name) const;

  // One leaf per parameter, in registration order, on the given tape.
  std::vector<diff::Tensor> make_leaves(diff::Tape& tape, bool needs_grad) const;

  struct ForwardT {
    diff::Tensor snippet_scores;  // T x 1
    diff::Tensor video_score;     // 1 x 1
    int k_used = 0;
  };
  ForwardT forward_t(diff::Tape& tape, const std::vector<diff::Tensor>& leaves,
                     const FeatureSequence& f, bool training, uint64_t dropout_seed) const;

  // Feature preprocessing alone (conv + cross-modal attention + projection).
  diff::Tensor preprocess_t(diff::Tape& tape, const std::vector<diff::Tensor>& leaves,
                            const FeatureSequence& f, bool training,
                            uint64_t dropout_seed) const;

  // Evaluation-mode forward on a private tape.
  DetectionScores forward(const FeatureSequence& f) const;

 private:
  diff::Tensor P(const std::vector<diff::Tensor>& leaves, const std::string& name) const;
  void register_params();

  ModelConfig cfg_;
  int d_v_ = 0, d_a_ = 0;
  std::vector<diff::Parameter> params_;
  std::map<std::string, size_t> index_;
};

// ---- training / evaluation -----------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double val_ap = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
};

// Mini-batch Adam with the cosine schedule over shuffled videos; deterministic
// for a fixed seed. Updates the model parameters in place. Aborts with a
// NumericError carrying epoch/batch diagnostics if the loss goes non-finite.
TrainResult train(const std::vector<FeatureSequence>& train_set,
                  const std::vector<FeatureSequence>& val_set, Model& model,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct VideoScores {
  std::string id;
  std::vector<double> scores;
  std::vector<uint8_t> labels;
  double video_score = 0.0;
  int k_used = 0;
};

struct EvalReport {
  double ap = 0.0;
  double auc = 0.0;
  std::vector<VideoScores> videos;  // sorted by id
};

// Frame-level AP/AUC over the concatenated scores of all videos (sorted by
// id). Requires frame labels; parallel across videos with a deterministic
// merge order.
EvalReport evaluate(const std::vector<FeatureSequence>& dataset, const Model& model);

// ---- checkpoints ------------------------------------------------------------------
//
// Binary, little-endian: magic "DSRC", u32 version=1, u32 meta length, meta
// JSON (model config + modality dims), u32 param count, per parameter
// (name, rows, cols, f64 data), u32 CRC32 of all preceding bytes.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

// Worker count for per-video parallelism: DSRL_THREADS caps it; >= 1.
int worker_threads();

}  // namespace dsrl
