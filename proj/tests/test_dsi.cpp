#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dsrl/dsi.hpp"
#include "dsrl/manifold.hpp"
#include "dsrl/optimizer.hpp"
#include "dsrl/rng.hpp"

using namespace dsrl;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (double& v : m.a) v = rng.uniform(-scale, scale);
  return m;
}

// Straight-line transcription of the attention map: jointly rescale to the
// unit working radius, lift each row, pairwise Lorentzian similarity,
// threshold, row softmax. Loops only, no tensor engine.
Mat attention_oracle(const Mat& Q, const Mat& K, double lambda) {
  const int T = Q.rows;
  double total = 0.0;
  for (int i = 0; i < T; ++i) {
    double s = 0.0;
    for (int j = 0; j < Q.cols; ++j) s += Q.at(i, j) * Q.at(i, j);
    total += std::sqrt(s);
  }
  for (int i = 0; i < K.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < K.cols; ++j) s += K.at(i, j) * K.at(i, j);
    total += std::sqrt(s);
  }
  const double scale = 1.0 / (total / (T + K.rows) + 1e-6);
  std::vector<LorentzPoint> q, k;
  for (int i = 0; i < T; ++i) {
    auto row = Q.row(i);
    for (double& v : row) v *= scale;
    q.push_back(lift_from_euclidean(row));
  }
  for (int i = 0; i < K.rows; ++i) {
    auto row = K.row(i);
    for (double& v : row) v *= scale;
    k.push_back(lift_from_euclidean(row));
  }
  Mat S(T, K.rows);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < K.rows; ++j) {
      const double ls =
          std::exp(-geodesic_distance(q[static_cast<size_t>(i)], k[static_cast<size_t>(j)]));
      S.at(i, j) = ls > lambda ? ls : 0.0;
    }
  for (int i = 0; i < T; ++i) {
    double mx = S.at(i, 0);
    for (int j = 1; j < S.cols; ++j) mx = std::max(mx, S.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < S.cols; ++j) {
      S.at(i, j) = std::exp(S.at(i, j) - mx);
      sum += S.at(i, j);
    }
    for (int j = 0; j < S.cols; ++j) S.at(i, j) /= sum;
  }
  return S;
}

// Independent transcription of the whole CSA block.
Mat csa_oracle(const Mat& target, const Mat& source, const Mat& Wq, const Mat& Wk,
               const Mat& Wv, const DsiParams& p) {
  const Mat Vq = matmul(target, Wq);
  const Mat Vk = matmul(source, Wk);
  const Mat Vv = matmul(source, Wv);
  const Mat A = attention_oracle(Vq, Vk, p.lambda);
  if (p.standard_attention) return matmul(A, Vv);
  Mat Z = matmul(A, Vk);
  const double inv = 1.0 / std::sqrt(static_cast<double>(Vk.cols));
  for (double& v : Z.a) v *= inv;
  // softmax over the snippet axis, per column
  for (int j = 0; j < Z.cols; ++j) {
    double mx = Z.at(0, j);
    for (int i = 1; i < Z.rows; ++i) mx = std::max(mx, Z.at(i, j));
    double sum = 0.0;
    for (int i = 0; i < Z.rows; ++i) {
      Z.at(i, j) = std::exp(Z.at(i, j) - mx);
      sum += Z.at(i, j);
    }
    for (int i = 0; i < Z.rows; ++i) Z.at(i, j) /= sum;
  }
  Mat out(Z.rows, Z.cols);
  for (size_t i = 0; i < out.a.size(); ++i) out.a[i] = Z.a[i] * Vv.a[i];
  return out;
}

}  // namespace

TEST_CASE("thresholded attention map") {
  Rng rng(5);

  SUBCASE("all similarities below the threshold give uniform rows") {
    // far-apart query and key rows: every Ls is tiny
    Mat Q(2, 2, {3.0, 0.0, 0.0, 3.0});
    Mat K(3, 2, {-3.0, 0.0, 0.0, -3.0, -2.0, -2.0});
    const auto A = thresholded_attention_map(Q, K, 0.9);
    for (double v : A.a) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("a tiny threshold reduces to the plain softmax of similarities") {
    const Mat Q = random_mat(rng, 3, 2, 0.8);
    const Mat K = random_mat(rng, 3, 2, 0.8);
    const auto A = thresholded_attention_map(Q, K, 1e-9);
    const auto O = attention_oracle(Q, K, 0.0);  // threshold inactive
    for (size_t i = 0; i < A.a.size(); ++i)
      CHECK(A.a[i] == doctest::Approx(O.a[i]).epsilon(1e-12));
  }

  SUBCASE("mixed 3x3 case matches the two-step oracle") {
    const Mat Q = random_mat(rng, 3, 2, 1.0);
    const Mat K = random_mat(rng, 3, 2, 1.0);
    const double lambda = 0.5;
    const auto A = thresholded_attention_map(Q, K, lambda);
    const auto O = attention_oracle(Q, K, lambda);
    for (size_t i = 0; i < A.a.size(); ++i)
      CHECK(A.a[i] == doctest::Approx(O.a[i]).epsilon(1e-12));
  }

  SUBCASE("rows always sum to one") {
    const Mat Q = random_mat(rng, 5, 3, 1.2);
    const Mat K = random_mat(rng, 5, 3, 1.2);
    for (double lambda : {0.2, 0.5, 0.8}) {
      const auto A = thresholded_attention_map(Q, K, lambda);
      for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < A.cols; ++j) s += A.at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("cross space attention") {
  Rng rng(15);
  DsiParams p;

  SUBCASE("T=1 returns the value row") {
    const Mat target = random_mat(rng, 1, 3);
    const Mat source = random_mat(rng, 1, 3);
    const Mat Wq = random_mat(rng, 3, 3), Wk = random_mat(rng, 3, 3), Wv = random_mat(rng, 3, 3);
    const auto out = cross_space_attention(target, source, Wq, Wk, Wv, p);
    const Mat Vv = matmul(source, Wv);
    for (size_t i = 0; i < out.a.size(); ++i)
      CHECK(out.a[i] == doctest::Approx(Vv.a[i]).epsilon(1e-12));
  }

  SUBCASE("identical source rows give identical output rows") {
    const Mat target = random_mat(rng, 4, 3);
    Mat source(4, 3);
    const auto row = random_mat(rng, 1, 3);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) source.at(i, j) = row.at(0, j);
    const Mat Wq = random_mat(rng, 3, 3), Wk = random_mat(rng, 3, 3), Wv = random_mat(rng, 3, 3);
    const auto out = cross_space_attention(target, source, Wq, Wk, Wv, p);
    for (int i = 1; i < 4; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(out.at(i, j) == doctest::Approx(out.at(0, j)).epsilon(1e-10));
  }

  SUBCASE("small random case matches the independent transcription") {
    const Mat target = random_mat(rng, 3, 4);
    const Mat source = random_mat(rng, 3, 4);
    const Mat Wq = random_mat(rng, 4, 4), Wk = random_mat(rng, 4, 4), Wv = random_mat(rng, 4, 4);
    for (bool std_attn : {false, true}) {
      DsiParams q;
      q.standard_attention = std_attn;
      const auto out = cross_space_attention(target, source, Wq, Wk, Wv, q);
      const auto oracle = csa_oracle(target, source, Wq, Wk, Wv, q);
      for (size_t i = 0; i < out.a.size(); ++i)
        CHECK(out.a[i] == doctest::Approx(oracle.a[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("dual space fuse") {
  Rng rng(25);
  const int T = 4, d = 4;

  auto make_weights = [&](diff::Tape& t) {
    DsiWeightsT w;
    w.e_from_h = {diff::constant(t, random_mat(rng, d, d, 0.6)),
                  diff::constant(t, random_mat(rng, d, d, 0.6)),
                  diff::constant(t, random_mat(rng, d, d, 0.6))};
    w.h_from_e = {diff::constant(t, random_mat(rng, d, d, 0.6)),
                  diff::constant(t, random_mat(rng, d, d, 0.6)),
                  diff::constant(t, random_mat(rng, d, d, 0.6))};
    return w;
  };

  SUBCASE("alpha = 0 is the exact identity on both branches") {
    diff::Tape t;
    const Mat ve = random_mat(rng, T, d);
    const Mat vh = random_mat(rng, T, d);
    DsiParams p;
    p.alpha = 0.0;
    const auto rep = dual_space_fuse_t(diff::constant(t, ve), diff::constant(t, vh),
                                       make_weights(t), p);
    CHECK(rep.v_e_prime.value() == ve.a);
    CHECK(rep.v_h_prime.value() == vh.a);
    // fused output is the elementwise max of the two branches
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < d; ++j)
        CHECK(rep.v_f.value()[static_cast<size_t>(i) * d + j] ==
              std::max(ve.at(i, j), vh.at(i, j)));
  }

  SUBCASE("equal branches collapse the max-pool to the row itself") {
    diff::Tape t;
    const Mat ve = random_mat(rng, T, d);
    DsiParams p;
    p.alpha = 0.0;
    const auto rep = dual_space_fuse_t(diff::constant(t, ve), diff::constant(t, ve),
                                       make_weights(t), p);
    CHECK(rep.v_f.value() == ve.a);
  }

  SUBCASE("alpha = 0.3 matches an independent transcription") {
    diff::Tape t;
    const Mat ve = random_mat(rng, T, d);
    const Mat vh = random_mat(rng, T, d);
    DsiParams p;  // alpha = 0.3 default
    const Mat eq = random_mat(rng, d, d, 0.6), ek = random_mat(rng, d, d, 0.6),
              ev = random_mat(rng, d, d, 0.6);
    const Mat hq = random_mat(rng, d, d, 0.6), hk = random_mat(rng, d, d, 0.6),
              hv = random_mat(rng, d, d, 0.6);
    DsiWeightsT w;
    w.e_from_h = {diff::constant(t, eq), diff::constant(t, ek), diff::constant(t, ev)};
    w.h_from_e = {diff::constant(t, hq), diff::constant(t, hk), diff::constant(t, hv)};
    const auto rep = dual_space_fuse_t(diff::constant(t, ve), diff::constant(t, vh), w, p);

    // transcription
    Mat cs_e = csa_oracle(ve, vh, eq, ek, ev, p);
    Mat vep(T, d);
    for (size_t i = 0; i < vep.a.size(); ++i) vep.a[i] = p.alpha * cs_e.a[i] + ve.a[i];
    Mat cs_h = csa_oracle(vh, vep, hq, hk, hv, p);
    Mat vhp(T, d);
    for (size_t i = 0; i < vhp.a.size(); ++i) vhp.a[i] = p.alpha * cs_h.a[i] + vh.a[i];
    for (size_t i = 0; i < vep.a.size(); ++i) {
      CHECK(rep.v_e_prime.value()[i] == doctest::Approx(vep.a[i]).epsilon(1e-12));
      CHECK(rep.v_h_prime.value()[i] == doctest::Approx(vhp.a[i]).epsilon(1e-12));
      CHECK(rep.v_f.value()[i] == doctest::Approx(std::max(vep.a[i], vhp.a[i])).epsilon(1e-12));
    }
  }

  SUBCASE("permuting snippets permutes all outputs identically") {
    diff::Tape t;
    const Mat ve = random_mat(rng, T, d);
    const Mat vh = random_mat(rng, T, d);
    DsiParams p;
    const auto w = make_weights(t);
    const auto rep = dual_space_fuse_t(diff::constant(t, ve), diff::constant(t, vh), w, p);

    const std::vector<int> perm{2, 0, 3, 1};
    Mat vep(T, d), vhp(T, d);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < d; ++j) {
        vep.at(i, j) = ve.at(perm[static_cast<size_t>(i)], j);
        vhp.at(i, j) = vh.at(perm[static_cast<size_t>(i)], j);
      }
    const auto rep2 = dual_space_fuse_t(diff::constant(t, vep), diff::constant(t, vhp), w, p);
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < d; ++j)
        CHECK(rep2.v_f.value()[static_cast<size_t>(i) * d + j] ==
              doctest::Approx(
                  rep.v_f.value()[static_cast<size_t>(perm[static_cast<size_t>(i)]) * d + j])
                  .epsilon(1e-12));
  }

  SUBCASE("attention rows sum to one inside the fuse") {
    diff::Tape t;
    const Mat q = random_mat(rng, T, d);
    const Mat k = random_mat(rng, T, d);
    DsiParams p;
    const auto A = thresholded_attention_map_t(diff::constant(t, q), diff::constant(t, k), p);
    for (int i = 0; i < T; ++i) {
      double s = 0.0;
      for (int j = 0; j < T; ++j) s += A.value()[static_cast<size_t>(i) * T + j];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("cross space attention gradients") {
  Rng rng(35);
  const int T = 3, d = 3;
  auto rv = [&](int n, double s) {
    std::vector<double> v(static_cast<size_t>(n));
    for (double& x : v) x = rng.uniform(-s, s);
    return v;
  };
  diff::GradCheckInput target{T, d, rv(T * d, 1.0)};
  diff::GradCheckInput source{T, d, rv(T * d, 1.0)};
  diff::GradCheckInput wq{d, d, rv(d * d, 0.6)};
  diff::GradCheckInput wk{d, d, rv(d * d, 0.6)};
  diff::GradCheckInput wv{d, d, rv(d * d, 0.6)};
  const double err = diff::grad_check(
      [](diff::Tape&, const std::vector<diff::Tensor>& v) {
        DsiParams p;
        CsaWeightsT w{v[2], v[3], v[4]};
        auto out = cross_space_attention_t(v[0], v[1], w, p);
        return diff::mean_all(diff::mul(out, out));
      },
      {target, source, wq, wk, wv});
  CHECK(err <= 1e-4);
}
