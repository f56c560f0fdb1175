#include "dsrl/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dsrl/graphs.hpp"
#include "dsrl/hypernn.hpp"
#include "dsrl/manifold.hpp"
#include "dsrl/metrics.hpp"
#include "dsrl/pipeline.hpp"
#include "dsrl/rng.hpp"

namespace dsrl {

namespace {

LorentzPoint random_point(Rng& rng, int dim, double radius = 1.5) {
  std::vector<double> e(static_cast<size_t>(dim));
  for (double& v : e) v = rng.uniform(-radius, radius);
  return lift_from_euclidean(e);
}

std::vector<LorentzPoint> clustered_points(Rng& rng, int T, int dim, double spread = 0.25) {
  const int clusters = 3;
  std::vector<std::vector<double>> centers;
  for (int c = 0; c < clusters; ++c) {
    std::vector<double> e(static_cast<size_t>(dim));
    for (double& v : e) v = rng.uniform(-1.5, 1.5);
    centers.push_back(std::move(e));
  }
  std::vector<LorentzPoint> pts;
  for (int i = 0; i < T; ++i) {
    std::vector<double> e = centers[static_cast<size_t>(i % clusters)];
    for (double& v : e) v += spread * rng.gaussian();
    pts.push_back(lift_from_euclidean(e));
  }
  return pts;
}

double membership_error(std::span<const double> coords) {
  double q = -coords[0] * coords[0];
  for (size_t i = 1; i < coords.size(); ++i) q += coords[i] * coords[i];
  return std::abs(q + 1.0);
}

void tally(SuiteResult& r, double err, double tol, bool time_positive = true) {
  ++r.checks;
  r.worst_error = std::max(r.worst_error, err);
  if (err > tol || !time_positive) ++r.failures;
}

HyperLinearParams random_layer(Rng& rng, int m, int n1, HyperLinearMode mode) {
  HyperLinearParams p;
  const double s = 1.0 / std::sqrt(static_cast<double>(n1));
  p.W = Mat(m, n1);
  for (double& v : p.W.a) v = rng.uniform(-s, s);
  p.v.resize(static_cast<size_t>(n1));
  for (double& v : p.v) v = rng.uniform(-s, s);
  p.b.assign(static_cast<size_t>(m), 0.0);
  p.mode = mode;
  p.dropout_rate = 0.6;
  return p;
}

// ---- suite 1: manifold membership over 1e4 draws ------------------------------

SuiteResult manifold_suite(const SelftestOptions& opts) {
  SuiteResult r;
  r.name = "manifold membership";
  Rng rng(0xA11CE);
  const double tol = 1e-9;

  // lift_from_euclidean
  for (int t = 0; t < 2500; ++t) {
    std::vector<double> e(4);
    for (double& v : e) v = rng.uniform(-3.0, 3.0);
    const auto p = lift_from_euclidean(e);
    tally(r, membership_error(p.coords()), tol, p.time() > 0.0);
  }
  // exp_map (with optional fault injection)
  for (int t = 0; t < 2500; ++t) {
    const auto x = random_point(rng, 3);
    std::vector<double> u(x.coords().size());
    for (double& v : u) v = rng.gaussian();
    auto tv = project_to_tangent(x, u);
    const double n = std::sqrt(std::max(0.0, lorentz_inner(tv.coords, tv.coords)));
    if (n > 0.0) {
      const double target = rng.uniform(0.0, 2.0);
      for (double& v : tv.coords) v *= target / n;
    }
    auto y = exp_map(x, tv).coords();
    y[0] += opts.exp_map_perturbation;
    tally(r, membership_error(y), tol, y[0] > 0.0);
  }
  // hyper_linear, both phi modes
  for (int t = 0; t < 2500; ++t) {
    const auto x = random_point(rng, 4);
    const auto mode =
        (t % 2 == 0) ? HyperLinearMode::kDropout : HyperLinearMode::kActivationNorm;
    const auto p = random_layer(rng, 3, 5, mode);
    const auto y = hyper_linear(x, p, /*training=*/t % 4 < 2, /*seed=*/t);
    tally(r, membership_error(y.coords()), tol, y.time() > 0.0);
  }
  // hyperbolic_aggregate over random semantic graphs
  for (int t = 0; t < 313; ++t) {
    const auto pts = clustered_points(rng, 8, 3);
    const auto g = semantic_adjacency(pts);
    for (const auto& y : hyperbolic_aggregate(g, pts))
      tally(r, membership_error(y.coords()), tol, y.time() > 0.0);
  }
  if (opts.exp_map_perturbation != 0.0) r.detail = "exp_map perturbation injected";
  return r;
}

// ---- suite 2: exp/log roundtrip -------------------------------------------------

SuiteResult roundtrip_suite() {
  SuiteResult r;
  r.name = "exp/log roundtrip";
  Rng rng(0xB0B);
  for (int t = 0; t < 1000; ++t) {
    const auto x = random_point(rng, 3, 2.0);
    std::vector<double> u(x.coords().size());
    for (double& v : u) v = rng.gaussian();
    auto tv = project_to_tangent(x, u);
    const double n = std::sqrt(std::max(0.0, lorentz_inner(tv.coords, tv.coords)));
    if (n > 0.0) {
      const double target = rng.uniform(0.0, 5.0);
      for (double& v : tv.coords) v *= target / n;
    }
    const auto y = exp_map(x, tv);
    const auto back = log_map(x, y);
    double err = 0.0;
    for (size_t i = 0; i < tv.coords.size(); ++i)
      err = std::max(err, std::abs(back.coords[i] - tv.coords[i]));
    tally(r, err, 1e-8);
  }
  return r;
}

// ---- suite 3: LSHAD exactness and monotonicity ----------------------------------

SuiteResult lshad_suite() {
  SuiteResult r;
  r.name = "lshad exactness";
  const LshadParams p;  // beta 0.8, gamma 1.2

  auto ref_sigmoid = [](long double x) {
    return static_cast<double>(1.0L / (1.0L + std::exp(-x)));
  };
  tally(r, std::abs(lshad(0.0, 1, p) - ref_sigmoid(0.6L)), 1e-12);
  tally(r, std::abs(lshad(1e15, 1, p) - ref_sigmoid(-0.4L)), 1e-12);

  // Strict monotonicity on a 100 x 100 grid. The sigmoid saturates to exactly
  // 1.0 in double once its argument passes ~36.7 (k >= 48 with the default
  // beta), so strictness is asserted on the argument (exact arithmetic) and on
  // the output wherever it is below the saturation point.
  auto arg_of = [&](double e, int k) { return p.beta * k - p.gamma + 1.0 / (e + 1.0); };
  const double sat = 1.0 - 1e-12;
  for (int k = 1; k <= 100; ++k) {
    for (int ei = 0; ei < 100; ++ei) {
      const double e = 0.25 * ei;
      const double cur = lshad(e, k, p);
      if (ei > 0) {  // decreasing in E
        const double prev = lshad(0.25 * (ei - 1), k, p);
        ++r.checks;
        if (!(arg_of(e, k) < arg_of(0.25 * (ei - 1), k)) || cur > prev ||
            (prev < sat && !(cur < prev)))
          ++r.failures;
      }
      if (k > 1) {  // increasing in k
        const double below = lshad(e, k - 1, p);
        ++r.checks;
        if (!(arg_of(e, k) > arg_of(e, k - 1)) || cur < below ||
            (cur < sat && !(cur > below)))
          ++r.failures;
      }
    }
  }
  return r;
}

// ---- suite 4: energy monotonicity sampling ---------------------------------------

SuiteResult energy_suite() {
  SuiteResult r;
  r.name = "energy monotonicity";
  int violations = 0;
  const int trials = 100;
  std::string log;
  for (int t = 0; t < trials; ++t) {
    Rng rng(0xEE000 + static_cast<uint64_t>(t));
    const auto pts = clustered_points(rng, 32, 8);
    const auto g = semantic_adjacency(pts);
    const double before = hyperbolic_dirichlet_energy(pts);
    const double after = hyperbolic_dirichlet_energy(hyperbolic_aggregate(g, pts));
    ++r.checks;
    if (after > before + 1e-9) {
      ++violations;
      r.worst_error = std::max(r.worst_error, after - before);
      char buf[64];
      std::snprintf(buf, sizeof(buf), " seed=%d dE=%.3e", t, after - before);
      log += buf;
    }
  }
  // monitored property: the inequality is stated without proof, so up to 5%
  // of samples may violate it; every violation is reported, never hidden
  if (violations > trials / 20) r.failures = violations;
  r.detail = violations == 0 ? "no violations"
                             : std::to_string(violations) + " violation(s):" + log;
  return r;
}

// ---- suite 5: gradient checks ------------------------------------------------------

SuiteResult gradient_suite() {
  SuiteResult r;
  r.name = "gradient checks";
  Rng rng(0x96AD);
  auto rv = [&](int n, double s) {
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = rng.uniform(-s, s);
    return v;
  };

  const int T = 3, dm = 4, m = 2;
  diff::GradCheckInput E{T, dm, rv(T * dm, 1.0)};
  diff::GradCheckInput W{m, dm + 1, rv(m * (dm + 1), 0.5)};
  diff::GradCheckInput vv{1, dm + 1, rv(dm + 1, 0.5)};
  diff::GradCheckInput b{1, m, rv(m, 0.2)};
  diff::GradCheckInput bp{1, 1, rv(1, 0.2)};

  auto ramp = [](diff::Tensor Y) {
    std::vector<double> c(Y.size());
    for (size_t i = 0; i < c.size(); ++i) c[i] = 0.2 * static_cast<double>(i % 7) - 0.5;
    auto C = diff::constant(*Y.tape(), Y.rows(), Y.cols(), std::move(c));
    return diff::sum_all(diff::mul(Y, C));
  };
  auto layer_from = [](const std::vector<diff::Tensor>& L, HyperLinearMode mode) {
    HyperLinearLayerT lt;
    lt.W = L[1];
    lt.v = L[2];
    lt.b = L[3];
    lt.b_prime = L[4];
    lt.mode = mode;
    lt.dropout_rate = 0.5;
    return lt;
  };

  // hyper_linear, both modes
  tally(r,
        diff::grad_check(
            [&](diff::Tape&, const std::vector<diff::Tensor>& L) {
              return ramp(hyper_linear_t(diff::lift_rows(L[0]),
                                         layer_from(L, HyperLinearMode::kActivationNorm), false,
                                         0));
            },
            {E, W, vv, b, bp}),
        1e-4);
  tally(r,
        diff::grad_check(
            [&](diff::Tape&, const std::vector<diff::Tensor>& L) {
              return ramp(hyper_linear_t(diff::lift_rows(L[0]),
                                         layer_from(L, HyperLinearMode::kDropout), true, 7));
            },
            {E, W, vv, b, bp}),
        1e-4);
  // full HE-GCN layer
  tally(r,
        diff::grad_check(
            [&](diff::Tape&, const std::vector<diff::Tensor>& L) {
              HeGcnLayerT layer;
              layer.linear = layer_from(L, HyperLinearMode::kActivationNorm);
              return ramp(he_gcn_layer_t(diff::lift_rows(L[0]), 1, layer, false, 0));
            },
            {E, W, vv, b, bp}),
        1e-4);
  // Euclidean GCN layer over the cosine graph
  diff::GradCheckInput Wg{dm, m, rv(dm * m, 0.5)};
  tally(r,
        diff::grad_check(
            [&](diff::Tape&, const std::vector<diff::Tensor>& L) {
              return ramp(gcn_layer_t(L[0], euclid_cosine_adjacency_t(L[0]), L[1]));
            },
            {E, Wg}),
        1e-4);
  // cross-space attention
  diff::GradCheckInput S{T, dm, rv(T * dm, 1.0)};
  diff::GradCheckInput Wq{dm, dm, rv(dm * dm, 0.5)};
  diff::GradCheckInput Wk{dm, dm, rv(dm * dm, 0.5)};
  diff::GradCheckInput Wv{dm, dm, rv(dm * dm, 0.5)};
  tally(r,
        diff::grad_check(
            [&](diff::Tape&, const std::vector<diff::Tensor>& L) {
              DsiParams p;
              CsaWeightsT w{L[2], L[3], L[4]};
              return ramp(cross_space_attention_t(L[0], L[1], w, p));
            },
            {E, S, Wq, Wk, Wv}),
        1e-4);
  // classifier + MIL + BCE composite
  diff::GradCheckInput Cw{1, dm + 1, rv(dm + 1, 0.5)};
  diff::GradCheckInput Cb{1, 1, rv(1, 0.2)};
  tally(r,
        diff::grad_check(
            [&](diff::Tape& tape, const std::vector<diff::Tensor>& L) {
              auto scores = hyper_classifier_t(diff::lift_rows(L[0]), L[1], L[2], 1.0);
              auto video = diff::topk_mean(scores, 1);
              auto one = diff::scalar_const(tape, 1.0);
              return diff::scale(
                  diff::log(diff::clamp_min(diff::sub(one, video), 1e-12)), -1.0);
            },
            {E, Cw, Cb}),
        1e-4);

  // full forward at T=3, d=8
  SynthSpec spec;
  spec.num_videos = 2;
  spec.t_min = 3;
  spec.t_max = 3;
  spec.d_visual = 6;
  spec.d_audio = 4;
  spec.seed = 17;
  const auto data = synth_generate(spec);
  ModelConfig mcfg;
  mcfg.feature_dim = 8;
  mcfg.seed = 11;
  Model model(mcfg, spec.d_visual, spec.d_audio);
  std::vector<diff::GradCheckInput> inputs;
  for (const auto& p : model.params())
    inputs.push_back(diff::GradCheckInput{p.rows, p.cols, p.value});
  const auto& video = data[1];
  tally(r,
        diff::grad_check(
            [&](diff::Tape& tape, const std::vector<diff::Tensor>& leaves) {
              const auto fwd = model.forward_t(tape, leaves, video, false, 0);
              auto one = diff::scalar_const(tape, 1.0);
              auto pos = diff::log(diff::clamp_min(fwd.video_score, 1e-12));
              auto neg = diff::log(diff::clamp_min(diff::sub(one, fwd.video_score), 1e-12));
              const double y = video.video_label ? 1.0 : 0.0;
              return diff::scale(
                  diff::add(diff::scale(pos, y), diff::scale(neg, 1.0 - y)), -1.0);
            },
            inputs),
        1e-3);
  return r;
}

// ---- suite 6: metric oracles ---------------------------------------------------------

SuiteResult metric_suite() {
  SuiteResult r;
  r.name = "metric oracles";
  Rng rng(0x3E7);

  // AP against brute-force all-thresholds enumeration for every n=8 pattern
  for (int pattern = 1; pattern < 256; ++pattern) {
    std::vector<uint8_t> labels(8);
    for (int i = 0; i < 8; ++i) labels[static_cast<size_t>(i)] = (pattern >> i) & 1;
    std::vector<double> scores(8);
    for (double& s : scores) s = rng.uniform();
    if (pattern % 3 == 0) scores[1] = scores[4];  // exercise tie grouping

    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    size_t total_pos = 0;
    for (uint8_t l : labels) total_pos += l;
    double oracle = 0.0, prev_recall = 0.0;
    for (double th : thresholds) {
      size_t tp = 0, fp = 0;
      for (size_t i = 0; i < scores.size(); ++i)
        if (scores[i] >= th) ((labels[i] != 0) ? tp : fp) += 1;
      const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
      oracle += (recall - prev_recall) * (static_cast<double>(tp) / static_cast<double>(tp + fp));
      prev_recall = recall;
    }
    tally(r, std::abs(average_precision(scores, labels) - oracle), 0.0);
  }

  // AUC against O(n^2) pair counting, ties included
  for (int t = 0; t < 100; ++t) {
    const int n = rng.uniform_int(4, 32);
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<uint8_t> labels(static_cast<size_t>(n));
    for (auto& s : scores) s = rng.uniform_int(0, 9) / 10.0;
    bool pos = false, neg = false;
    for (auto& l : labels) {
      l = static_cast<uint8_t>(rng.uniform_int(0, 1));
      (l ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    double wins = 0.0;
    size_t pairs = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (!labels[i]) continue;
      for (size_t j = 0; j < scores.size(); ++j) {
        if (labels[j]) continue;
        ++pairs;
        if (scores[i] > scores[j])
          wins += 1.0;
        else if (scores[i] == scores[j])
          wins += 0.5;
      }
    }
    tally(r, std::abs(roc_auc(scores, labels) - wins / static_cast<double>(pairs)), 0.0);
  }

  // worked examples
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  const std::vector<uint8_t> l{1, 0, 1, 0};
  tally(r, std::abs(average_precision(s, l) - 5.0 / 6.0), 1e-15);
  tally(r, std::abs(roc_auc(s, l) - 0.75), 0.0);
  return r;
}

}  // namespace

std::vector<SuiteResult> run_selftests(const SelftestOptions& opts) {
  std::vector<SuiteResult> results;
  results.push_back(manifold_suite(opts));
  results.push_back(roundtrip_suite());
  results.push_back(lshad_suite());
  results.push_back(energy_suite());
  results.push_back(gradient_suite());
  results.push_back(metric_suite());
  return results;
}

}  // namespace dsrl
