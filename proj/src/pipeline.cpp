#include "dsrl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "dsrl/metrics.hpp"
#include "dsrl/rng.hpp"
#include "json.hpp"

namespace dsrl {

using diff::Tensor;

// ---- small helpers -----------------------------------------------------------

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::kNone;
  if (s == "euclidean-only") return Ablation::kEuclideanOnly;
  if (s == "no-dsi") return Ablation::kNoDsi;
  if (s == "cosine-dsi") return Ablation::kCosineDsi;
  if (s == "fixed-threshold") return Ablation::kFixedThreshold;
  throw ValidationError("unknown ablation '" + s + "'");
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kEuclideanOnly: return "euclidean-only";
    case Ablation::kNoDsi: return "no-dsi";
    case Ablation::kCosineDsi: return "cosine-dsi";
    case Ablation::kFixedThreshold: return "fixed-threshold";
  }
  throw ContractError("unreachable ablation value");
}

void ModelConfig::validate() const {
  if (feature_dim < 2 || feature_dim % 2 != 0)
    throw ValidationError("model: feature_dim must be even and >= 2");
  if (hegcn_layers < 1 || hegcn_layers > 2)
    throw ValidationError("model: hegcn_layers must be 1 or 2");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ValidationError("model: dropout must be in [0,1)");
  if (classifier_eps <= 0.0) throw ValidationError("model: epsilon must be positive");
  if (epochs < 1) throw ValidationError("model: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("model: batch size must be >= 1");
  if (learning_rate <= 0.0) throw ValidationError("model: learning rate must be positive");
  if (temporal.sigma <= 0.0) throw ValidationError("model: sigma must be positive");
  if (fixed_threshold <= 0.0 || fixed_threshold >= 1.0)
    throw ValidationError("model: fixed threshold must be in (0,1)");
  if (lift_radius <= 0.0) throw ValidationError("model: lift_radius must be positive");
  if (hyper_gate_scale <= 0.0)
    throw ValidationError("model: hyper_gate_scale must be positive");
  dsi.validate();
}

std::pair<double, int> mil_video_score(std::span<const double> snippet_scores) {
  const int T = static_cast<int>(snippet_scores.size());
  if (T < 1) throw ContractError("mil_video_score: empty score list");
  const int k = T / 16 + 1;
  std::vector<double> sorted(snippet_scores.begin(), snippet_scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += sorted[static_cast<size_t>(i)];
  return {s / k, k};
}

double bce_loss(std::span<const double> preds, std::span<const uint8_t> labels) {
  if (preds.size() != labels.size()) throw DimensionError("bce_loss: length mismatch");
  if (preds.empty()) throw ContractError("bce_loss: empty batch");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const double p = preds[i];
    const double y = labels[i] ? 1.0 : 0.0;
    acc += y * std::log(std::max(p, 1e-12)) + (1.0 - y) * std::log(std::max(1.0 - p, 1e-12));
  }
  return -acc / static_cast<double>(preds.size());
}

namespace {

// recorded BCE over a batch of 1x1 video scores
Tensor batch_bce_t(diff::Tape& tape, const std::vector<Tensor>& preds,
                   const std::vector<uint8_t>& labels) {
  using namespace diff;
  if (preds.empty()) throw ContractError("batch_bce_t: empty batch");
  Tensor P = preds[0];
  for (size_t i = 1; i < preds.size(); ++i) P = concat_cols(P, preds[i]);
  std::vector<double> y(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] ? 1.0 : 0.0;
  Tensor Y = constant(tape, 1, static_cast<int>(labels.size()), std::move(y));
  Tensor one = scalar_const(tape, 1.0);
  Tensor pos = mul(Y, diff::log(clamp_min(P, 1e-12)));
  Tensor neg = mul(sub(one, Y), diff::log(clamp_min(sub(one, P), 1e-12)));
  return scale(mean_all(add(pos, neg)), -1.0);
}

void check_manifold_rows(const Tensor& X, const char* stage) {
  const int r = X.rows(), c = X.cols();
  const auto& v = X.value();
  for (int i = 0; i < r; ++i) {
    const size_t base = static_cast<size_t>(i) * c;
    double q = -v[base] * v[base];
    for (int j = 1; j < c; ++j) q += v[base + j] * v[base + j];
    if (std::abs(q + 1.0) > 1e-9 || v[base] <= 0.0)
      throw GeometryError(std::string(stage) + ": hyperbolic intermediate off the manifold");
  }
}

// kernel-3 same-padding temporal convolution with relu
Tensor conv3_relu(Tensor X, Tensor w_prev, Tensor w_self, Tensor w_next, Tensor b) {
  using namespace diff;
  Tensor y = add(matmul(shift_rows(X, 1), w_prev), matmul(X, w_self));
  y = add(y, matmul(shift_rows(X, -1), w_next));
  return relu(add(y, b));
}

Mat row_softmaxed(Mat m) {
  for (int i = 0; i < m.rows; ++i) {
    double mx = m.at(i, 0);
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      m.at(i, j) = std::exp(m.at(i, j) - mx);
      sum += m.at(i, j);
    }
    for (int j = 0; j < m.cols; ++j) m.at(i, j) /= sum;
  }
  return m;
}

}  // namespace

// ---- Model -------------------------------------------------------------------

Model::Model(ModelConfig cfg, int d_visual, int d_audio)
    : cfg_(cfg), d_v_(d_visual), d_a_(d_audio) {
  cfg_.validate();
  if (d_v_ < 1) throw ValidationError("model: d_visual must be >= 1");
  if (d_a_ < 0) throw ValidationError("model: d_audio must be >= 0");
  register_params();
}

void Model::register_params() {
  Rng rng(mix_seed(cfg_.seed, 0x1217));
  auto push = [&](const std::string& name, int rows, int cols, int fan_in, bool zero = false,
                  double gain = 1.0) {
    diff::Parameter p;
    p.name = name;
    p.rows = rows;
    p.cols = cols;
    p.value.resize(static_cast<size_t>(rows) * cols);
    const double s = zero ? 0.0 : gain / std::sqrt(static_cast<double>(fan_in));
    for (double& v : p.value) v = zero ? 0.0 : rng.uniform(-s, s);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
  };

  const int d = cfg_.feature_dim;
  const int m = d / 2;

  push("pre.conv_v.w0", d_v_, d_v_, d_v_);
  push("pre.conv_v.w1", d_v_, d_v_, d_v_);
  push("pre.conv_v.w2", d_v_, d_v_, d_v_);
  push("pre.conv_v.b", 1, d_v_, 1, /*zero=*/true);
  if (d_a_ > 0) {
    push("pre.conv_a.w0", d_a_, d_a_, d_a_);
    push("pre.conv_a.w1", d_a_, d_a_, d_a_);
    push("pre.conv_a.w2", d_a_, d_a_, d_a_);
    push("pre.conv_a.b", 1, d_a_, 1, true);
    push("pre.attn.wq", d_a_, d_a_, d_a_);
    push("pre.attn.wk", d_v_, d_a_, d_v_);
    push("pre.attn.wv", d_v_, d_a_, d_v_);
  }
  push("pre.proj.w", d_v_ + d_a_, d, d_v_ + d_a_);
  push("pre.proj.b", 1, d, 1, true);

  push("eu.sem.w1", d, m, d);
  push("eu.sem.w2", m, m, m);
  push("eu.tmp.w1", d, m, d);
  push("eu.tmp.w2", m, m, m);

  push("hy.sem1.W", m, d + 1, d + 1);
  push("hy.sem1.v", 1, d + 1, d + 1);
  push("hy.sem1.b", 1, m, 1, true);
  push("hy.sem1.bp", 1, 1, 1, true);
  push("hy.sem2.W", m, m + 1, m + 1);
  push("hy.sem2.v", 1, m + 1, m + 1);
  push("hy.sem2.b", 1, m, 1, true);
  push("hy.sem2.bp", 1, 1, 1, true);
  push("hy.tmp1.W", m, d + 1, d + 1);
  push("hy.tmp2.W", m, m + 1, m + 1);

  push("dsi.eh.wq", d, d, d);
  push("dsi.eh.wk", d, d, d);
  push("dsi.eh.wv", d, d, d);
  push("dsi.he.wq", d, d, d);
  push("dsi.he.wk", d, d, d);
  push("dsi.he.wv", d, d, d);

  push("cls.w", 1, d + 1, d + 1);
  push("cls.b", 1, 1, 1, true);
}

const diff::Parameter& Model::param(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::vector<Tensor> Model::make_leaves(diff::Tape& tape, bool needs_grad) const {
  std::vector<Tensor> leaves;
  leaves.reserve(params_.size());
  for (const auto& p : params_)
    leaves.push_back(diff::leaf(tape, p.rows, p.cols, p.value, needs_grad));
  return leaves;
}

Tensor Model::P(const std::vector<Tensor>& leaves, const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return leaves[it->second];
}

Tensor Model::preprocess_t(diff::Tape& tape, const std::vector<Tensor>& leaves,
                           const FeatureSequence& f, bool training,
                           uint64_t dropout_seed) const {
  using namespace diff;
  (void)training;
  (void)dropout_seed;
  f.validate();
  if (f.visual.cols != d_v_)
    throw ValidationError("preprocess: visual dim does not match the model");
  if (f.multimodal() != (d_a_ > 0) || (f.multimodal() && f.audio.cols != d_a_))
    throw ValidationError("preprocess: audio modality does not match the model");

  Tensor xv = constant(tape, f.visual);
  Tensor vv = conv3_relu(xv, P(leaves, "pre.conv_v.w0"), P(leaves, "pre.conv_v.w1"),
                         P(leaves, "pre.conv_v.w2"), P(leaves, "pre.conv_v.b"));
  if (d_a_ == 0) {
    return add(matmul(vv, P(leaves, "pre.proj.w")), P(leaves, "pre.proj.b"));
  }
  Tensor xa = constant(tape, f.audio);
  Tensor va = conv3_relu(xa, P(leaves, "pre.conv_a.w0"), P(leaves, "pre.conv_a.w1"),
                         P(leaves, "pre.conv_a.w2"), P(leaves, "pre.conv_a.b"));
  // single-head scaled dot-product attention: audio queries, visual keys/values
  Tensor q = matmul(va, P(leaves, "pre.attn.wq"));
  Tensor k = matmul(vv, P(leaves, "pre.attn.wk"));
  Tensor v = matmul(vv, P(leaves, "pre.attn.wv"));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_a_));
  Tensor attn = matmul(row_softmax(scale(matmul(q, transpose(k)), inv_sqrt)), v);
  Tensor enhanced = add(va, attn);
  return add(matmul(concat_cols(vv, enhanced), P(leaves, "pre.proj.w")),
             P(leaves, "pre.proj.b"));
}

Model::ForwardT Model::forward_t(diff::Tape& tape, const std::vector<Tensor>& leaves,
                                 const FeatureSequence& f, bool training,
                                 uint64_t dropout_seed) const {
  using namespace diff;
  const int T = f.frames();
  const int L = cfg_.hegcn_layers;

  Tensor x0 = preprocess_t(tape, leaves, f, training, dropout_seed);

  // shared row-stochastic temporal graph
  const Mat at_mat = row_softmaxed(temporal_adjacency(T, cfg_.temporal).A);
  Tensor at = constant(tape, at_mat);

  // Euclidean branch: semantic (cosine) GCN + temporal GCN, concatenated
  Tensor e_sem = gcn_layer_t(x0, euclid_cosine_adjacency_t(x0), P(leaves, "eu.sem.w1"));
  if (L == 2)
    e_sem = gcn_layer_t(e_sem, euclid_cosine_adjacency_t(e_sem), P(leaves, "eu.sem.w2"));
  Tensor e_tmp = gcn_layer_t(x0, at, P(leaves, "eu.tmp.w1"));
  if (L == 2) e_tmp = gcn_layer_t(e_tmp, at, P(leaves, "eu.tmp.w2"));
  Tensor v_e = concat_cols(e_sem, e_tmp);  // T x d

  Tensor v_f;
  if (cfg_.ablate == Ablation::kEuclideanOnly) {
    v_f = v_e;
  } else {
    // hyperbolic branch: condition the lift input so the mean radius sits at
    // lift_radius whatever scale training has pushed x0 to; relative radii
    // are preserved
    Tensor mean_norm = mean_all(row_norm(x0));
    Tensor lift_in = mul(x0, div(scalar_const(tape, cfg_.lift_radius),
                                 add(mean_norm, scalar_const(tape, 1e-6))));
    Tensor xh = lift_rows(lift_in);
    if (cfg_.debug_manifold_checks) check_manifold_rows(xh, "lift");

    auto he_layer = [&](const char* prefix) {
      HeGcnLayerT layer;
      layer.linear.W = P(leaves, std::string(prefix) + ".W");
      layer.linear.v = P(leaves, std::string(prefix) + ".v");
      layer.linear.b = P(leaves, std::string(prefix) + ".b");
      layer.linear.b_prime = P(leaves, std::string(prefix) + ".bp");
      layer.linear.mode = HyperLinearMode::kActivationNorm;
      layer.linear.lambda_phi = cfg_.hyper_gate_scale;
      layer.lshad = cfg_.lshad;
      layer.fixed_threshold = cfg_.ablate == Ablation::kFixedThreshold;
      layer.theta_fixed = cfg_.fixed_threshold;
      return layer;
    };
    Tensor h_sem = he_gcn_layer_t(xh, 1, he_layer("hy.sem1"), training,
                                  mix_seed(dropout_seed, 11));
    if (L == 2)
      h_sem = he_gcn_layer_t(h_sem, 2, he_layer("hy.sem2"), training,
                             mix_seed(dropout_seed, 12));
    if (cfg_.debug_manifold_checks) check_manifold_rows(h_sem, "he_gcn");

    auto tmp_layer = [&](const char* wname) {
      HyperLinearLayerT lt;
      lt.W = P(leaves, wname);
      lt.mode = HyperLinearMode::kDropout;
      lt.dropout_rate = cfg_.dropout_rate;
      return lt;
    };
    Tensor h_tmp = hyperbolic_aggregate_t(
        at, hyper_linear_t(xh, tmp_layer("hy.tmp1.W"), training, mix_seed(dropout_seed, 21)));
    if (L == 2)
      h_tmp = hyperbolic_aggregate_t(
          at,
          hyper_linear_t(h_tmp, tmp_layer("hy.tmp2.W"), training, mix_seed(dropout_seed, 22)));
    if (cfg_.debug_manifold_checks) check_manifold_rows(h_tmp, "hyperbolic temporal");

    // branch concat in the origin tangent space, re-lift for DSI
    Tensor v_h_log = concat_cols(log0_rows(h_sem), log0_rows(h_tmp));  // T x d
    if (cfg_.debug_manifold_checks)
      check_manifold_rows(lift_rows(v_h_log), "branch concat");

    DsiParams dsi = cfg_.dsi;
    dsi.cosine_similarity = cfg_.ablate == Ablation::kCosineDsi;
    if (cfg_.ablate == Ablation::kNoDsi) dsi.alpha = 0.0;  // concat + pool, no interaction

    DsiWeightsT w;
    w.e_from_h = {P(leaves, "dsi.eh.wq"), P(leaves, "dsi.eh.wk"), P(leaves, "dsi.eh.wv")};
    w.h_from_e = {P(leaves, "dsi.he.wq"), P(leaves, "dsi.he.wk"), P(leaves, "dsi.he.wv")};
    v_f = dual_space_fuse_t(v_e, v_h_log, w, dsi).v_f;
  }

  Tensor xf = lift_rows(v_f);
  if (cfg_.debug_manifold_checks) check_manifold_rows(xf, "fused lift");
  Tensor scores =
      hyper_classifier_t(xf, P(leaves, "cls.w"), P(leaves, "cls.b"), cfg_.classifier_eps);

  ForwardT out;
  out.snippet_scores = scores;
  out.k_used = T / 16 + 1;
  out.video_score = diff::topk_mean(scores, out.k_used);
  return out;
}

DetectionScores Model::forward(const FeatureSequence& f) const {
  diff::Tape tape;
  const auto leaves = make_leaves(tape, /*needs_grad=*/false);
  const auto fwd = forward_t(tape, leaves, f, /*training=*/false, /*dropout_seed=*/0);
  DetectionScores out;
  out.snippet_scores = fwd.snippet_scores.value();
  out.video_score = fwd.video_score.scalar();
  out.k_used = fwd.k_used;
  return out;
}

// ---- training ---------------------------------------------------------------------

TrainResult train(const std::vector<FeatureSequence>& train_set,
                  const std::vector<FeatureSequence>& val_set, Model& model,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  for (const auto& f : train_set) f.validate();
  const ModelConfig& cfg = model.config();

  diff::AdamConfig acfg;
  acfg.base_lr = cfg.learning_rate;
  acfg.total_epochs = cfg.epochs;
  diff::AdamState state;

  TrainResult result;
  uint64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle_rng(mix_seed(cfg.seed, 0xE90C0000ULL + static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      diff::Tape tape;
      auto leaves = model.make_leaves(tape, /*needs_grad=*/true);
      std::vector<Tensor> preds;
      std::vector<uint8_t> labels;
      try {
        for (size_t i = start; i < end; ++i) {
          const auto& f = train_set[order[i]];
          const auto fwd =
              model.forward_t(tape, leaves, f, /*training=*/true, mix_seed(cfg.seed, ++step));
          preds.push_back(fwd.video_score);
          labels.push_back(f.video_label);
        }
        Tensor loss = batch_bce_t(tape, preds, labels);
        loss_sum += loss.scalar();
        tape.backward(loss);
      } catch (const NumericError& e) {
        double pnorm = 0.0;
        for (const auto& p : model.params())
          for (double v : p.value) pnorm += v * v;
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches) + ": " + e.what() +
                           " (parameter norm " + std::to_string(std::sqrt(pnorm)) + ")");
      }
      std::vector<std::vector<double>> grads;
      grads.reserve(leaves.size());
      for (const auto& l : leaves) grads.push_back(l.grad());
      diff::adam_step(model.params(), grads, state, acfg, epoch);
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / std::max(1, batches);
    log.lr = diff::cosine_lr(acfg, epoch);
    log.val_ap = val_set.empty() ? 0.0 : evaluate(val_set, model).ap;
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

// ---- evaluation ---------------------------------------------------------------------

int worker_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  n = std::min(n, 8);
  if (const char* env = std::getenv("DSRL_THREADS")) {
    char* endp = nullptr;
    const long v = std::strtol(env, &endp, 10);
    if (endp == env || *endp != '\0' || v < 1)
      throw ValidationError("DSRL_THREADS must be a positive integer");
    n = std::min(n, static_cast<int>(v));
  }
  return n;
}

namespace {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

EvalReport evaluate(const std::vector<FeatureSequence>& dataset, const Model& model) {
  if (dataset.empty()) throw ContractError("evaluate: empty dataset");
  for (const auto& f : dataset)
    if (!f.has_frame_labels)
      throw ContractError("evaluate: video '" + f.id + "' has no frame labels");

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return dataset[a].id < dataset[b].id; });

  EvalReport report;
  report.videos.resize(dataset.size());
  parallel_for(static_cast<int>(dataset.size()), worker_threads(), [&](int i) {
    const auto& f = dataset[order[static_cast<size_t>(i)]];
    const auto det = model.forward(f);
    VideoScores vs;
    vs.id = f.id;
    vs.scores = det.snippet_scores;
    vs.labels = f.frame_labels;
    vs.video_score = det.video_score;
    vs.k_used = det.k_used;
    report.videos[static_cast<size_t>(i)] = std::move(vs);
  });

  std::vector<double> scores;
  std::vector<uint8_t> labels;
  for (const auto& v : report.videos) {
    scores.insert(scores.end(), v.scores.begin(), v.scores.end());
    labels.insert(labels.end(), v.labels.begin(), v.labels.end());
  }
  report.ap = average_precision(scores, labels);
  report.auc = roc_auc(scores, labels);
  return report;
}

// ---- checkpoints -----------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[4] = {'D', 'S', 'R', 'C'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<uint8_t>& out, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

double get_f64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

nlohmann::ordered_json config_to_json(const ModelConfig& cfg, int d_v, int d_a) {
  nlohmann::ordered_json j;
  j["feature_dim"] = cfg.feature_dim;
  j["hegcn_layers"] = cfg.hegcn_layers;
  j["beta"] = cfg.lshad.beta;
  j["gamma"] = cfg.lshad.gamma;
  j["sigma"] = cfg.temporal.sigma;
  j["lift_radius"] = cfg.lift_radius;
  j["hyper_gate_scale"] = cfg.hyper_gate_scale;
  j["lambda"] = cfg.dsi.lambda;
  j["alpha"] = cfg.dsi.alpha;
  j["standard_attention"] = cfg.dsi.standard_attention;
  j["dropout"] = cfg.dropout_rate;
  j["epsilon"] = cfg.classifier_eps;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["learning_rate"] = cfg.learning_rate;
  j["seed"] = cfg.seed;
  j["ablate"] = to_string(cfg.ablate);
  j["fixed_threshold"] = cfg.fixed_threshold;
  j["d_visual"] = d_v;
  j["d_audio"] = d_a;
  return j;
}

void config_from_json(const nlohmann::json& j, ModelConfig& cfg, int& d_v, int& d_a) {
  cfg.feature_dim = j.at("feature_dim").get<int>();
  cfg.hegcn_layers = j.at("hegcn_layers").get<int>();
  cfg.lshad.beta = j.at("beta").get<double>();
  cfg.lshad.gamma = j.at("gamma").get<double>();
  cfg.temporal.sigma = j.at("sigma").get<double>();
  cfg.lift_radius = j.at("lift_radius").get<double>();
  cfg.hyper_gate_scale = j.at("hyper_gate_scale").get<double>();
  cfg.dsi.lambda = j.at("lambda").get<double>();
  cfg.dsi.alpha = j.at("alpha").get<double>();
  cfg.dsi.standard_attention = j.at("standard_attention").get<bool>();
  cfg.dropout_rate = j.at("dropout").get<double>();
  cfg.classifier_eps = j.at("epsilon").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.ablate = ablation_from_string(j.at("ablate").get<std::string>());
  cfg.fixed_threshold = j.at("fixed_threshold").get<double>();
  d_v = j.at("d_visual").get<int>();
  d_a = j.at("d_audio").get<int>();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kCkptMagic, kCkptMagic + 4);
  put_u32(buf, kCkptVersion);
  const std::string meta = config_to_json(model.config(), model.d_visual(), model.d_audio()).dump();
  put_u32(buf, static_cast<uint32_t>(meta.size()));
  buf.insert(buf.end(), meta.begin(), meta.end());
  put_u32(buf, static_cast<uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    put_u32(buf, static_cast<uint32_t>(p.name.size()));
    buf.insert(buf.end(), p.name.begin(), p.name.end());
    put_u32(buf, static_cast<uint32_t>(p.rows));
    put_u32(buf, static_cast<uint32_t>(p.cols));
    for (double v : p.value) put_f64(buf, v);
  }
  put_u32(buf, crc32(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IngestionError("short write: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open: " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  const std::string name = path.string();
  auto need = [&](size_t off, size_t len) {
    if (off + len > buf.size()) throw TruncatedFileError("checkpoint truncated: " + name);
  };
  need(0, 12);
  if (std::memcmp(buf.data(), kCkptMagic, 4) != 0)
    throw BadMagicError("bad magic in checkpoint: " + name);
  if (get_u32(buf.data() + 4) != kCkptVersion)
    throw BadVersionError("unsupported checkpoint version in: " + name);
  if (buf.size() < 16) throw TruncatedFileError("checkpoint truncated: " + name);
  const uint32_t stored_crc = get_u32(buf.data() + buf.size() - 4);
  if (crc32(buf.data(), buf.size() - 4) != stored_crc)
    throw ChecksumError("checksum mismatch in checkpoint: " + name);

  size_t off = 8;
  const uint32_t meta_len = get_u32(buf.data() + off);
  off += 4;
  need(off, meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(buf.begin() + static_cast<ptrdiff_t>(off),
                                 buf.begin() + static_cast<ptrdiff_t>(off + meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("malformed checkpoint metadata in " + name + ": " + e.what());
  }
  off += meta_len;

  ModelConfig cfg;
  int d_v = 0, d_a = 0;
  try {
    config_from_json(meta, cfg, d_v, d_a);
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError("incomplete checkpoint metadata in " + name + ": " + e.what());
  }
  Model model(cfg, d_v, d_a);

  need(off, 4);
  const uint32_t count = get_u32(buf.data() + off);
  off += 4;
  if (count != model.params().size())
    throw IngestionError("checkpoint parameter count does not match the model: " + name);
  for (uint32_t i = 0; i < count; ++i) {
    need(off, 4);
    const uint32_t name_len = get_u32(buf.data() + off);
    off += 4;
    need(off, name_len + 8);
    std::string pname(buf.begin() + static_cast<ptrdiff_t>(off),
                      buf.begin() + static_cast<ptrdiff_t>(off + name_len));
    off += name_len;
    const uint32_t rows = get_u32(buf.data() + off);
    const uint32_t cols = get_u32(buf.data() + off + 4);
    off += 8;
    auto& p = model.params()[i];
    if (p.name != pname || p.rows != static_cast<int>(rows) || p.cols != static_cast<int>(cols))
      throw IngestionError("checkpoint parameter '" + pname + "' does not match the model: " +
                           name);
    need(off, static_cast<size_t>(rows) * cols * 8);
    for (auto& v : p.value) {
      v = get_f64(buf.data() + off);
      off += 8;
    }
  }
  return model;
}

}  // namespace dsrl
