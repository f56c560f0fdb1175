#include "dsrl/dsi.hpp"

#include <cmath>

namespace dsrl {

namespace {

using diff::Tensor;

Tensor similarity_matrix_t(Tensor Q, Tensor K, const DsiParams& p) {
  using namespace diff;
  if (p.cosine_similarity) {
    return matmul(unit_rows(Q), transpose(unit_rows(K)));
  }
  // joint rescale to the working radius, then lift; one shared factor keeps
  // the query/key geometry intact
  diff::Tape& t = *Q.tape();
  Tensor total = add(sum_all(row_norm(Q)), sum_all(row_norm(K)));
  Tensor mean_norm = scale(total, 1.0 / static_cast<double>(Q.rows() + K.rows()));
  Tensor s = div(scalar_const(t, p.similarity_radius),
                 add(mean_norm, scalar_const(t, 1e-6)));
  Tensor Xq = lift_rows(mul(Q, s));
  Tensor Xk = lift_rows(mul(K, s));
  Tensor G = matmul(lorentz_flip(Xq), transpose(Xk));
  Tensor D = diff::acosh(scale(G, -1.0));
  return diff::exp(scale(D, -1.0));
}

}  // namespace

diff::Tensor thresholded_attention_map_t(diff::Tensor Q, diff::Tensor K, const DsiParams& p) {
  using namespace diff;
  p.validate();
  Tensor S = similarity_matrix_t(Q, K, p);
  const auto& sv = S.value();
  std::vector<double> mask(sv.size());
  for (size_t i = 0; i < sv.size(); ++i) mask[i] = sv[i] > p.lambda ? 1.0 : 0.0;
  return row_softmax(apply_mask(S, mask));
}

diff::Tensor cross_space_attention_t(diff::Tensor target, diff::Tensor source,
                                     const CsaWeightsT& w, const DsiParams& p) {
  using namespace diff;
  Tensor Vq = matmul(target, w.Wq);
  Tensor Vk = matmul(source, w.Wk);
  Tensor Vv = matmul(source, w.Wv);
  Tensor A = thresholded_attention_map_t(Vq, Vk, p);
  if (p.standard_attention) return matmul(A, Vv);
  // literal form: softmax over the snippet axis of A x V_k / sqrt(d),
  // gating the value graph elementwise
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(Vk.cols()));
  Tensor S = col_softmax(scale(matmul(A, Vk), inv_sqrt_d));
  return mul(S, Vv);
}

DualRepT dual_space_fuse_t(diff::Tensor v_e, diff::Tensor v_h_log, const DsiWeightsT& w,
                           const DsiParams& p) {
  using namespace diff;
  p.validate();
  DualRepT out;
  if (p.alpha == 0.0) {
    // exact identity on both branches
    out.v_e_prime = v_e;
    out.v_h_prime = v_h_log;
  } else {
    Tensor cs_e = cross_space_attention_t(v_e, v_h_log, w.e_from_h, p);
    out.v_e_prime = add(scale(cs_e, p.alpha), v_e);
    Tensor cs_h = cross_space_attention_t(v_h_log, out.v_e_prime, w.h_from_e, p);
    out.v_h_prime = add(scale(cs_h, p.alpha), v_h_log);
  }
  out.v_f = maxpool_cols(interleave_cols(out.v_e_prime, out.v_h_prime), 2, 2);
  return out;
}

// ---- plain wrappers --------------------------------------------------------------

Mat thresholded_attention_map(const Mat& Q, const Mat& K, double lambda) {
  diff::Tape t;
  DsiParams p;
  p.lambda = lambda;
  auto q = diff::constant(t, Q);
  auto k = diff::constant(t, K);
  return thresholded_attention_map_t(q, k, p).to_mat();
}

Mat cross_space_attention(const Mat& target, const Mat& source, const Mat& Wq, const Mat& Wk,
                          const Mat& Wv, const DsiParams& p) {
  diff::Tape t;
  CsaWeightsT w{diff::constant(t, Wq), diff::constant(t, Wk), diff::constant(t, Wv)};
  return cross_space_attention_t(diff::constant(t, target), diff::constant(t, source), w, p)
      .to_mat();
}

}  // namespace dsrl
