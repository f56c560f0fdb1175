#pragma once

#include <vector>

#include "dsrl/linalg.hpp"
#include "dsrl/tensor.hpp"

namespace dsrl {

// Dual-Space Interaction: thresholded Lorentzian cross-space attention plus
// residual fusion. Euclidean-side operands are lifted onto the manifold for
// the similarity computation; hyperbolic-side operands arrive here already
// log-mapped at the origin, so all inputs are T x d coordinate matrices.

struct DsiParams {
  double lambda = 0.8;  // similarity threshold, in (0,1)
  double alpha = 0.3;   // residual mixing weight, in [0,1]
  // Queries and keys are jointly rescaled to this mean radius before the
  // lift, so the lambda cut stays selective at any learned feature scale.
  double similarity_radius = 1.0;
  // standard cross-attention (attention map applied to the values directly)
  // instead of the printed double-softmax form; comparison switch, default off
  bool standard_attention = false;
  // cosine similarity instead of the Lorentzian metric (ablation)
  bool cosine_similarity = false;

  void validate() const {
    if (lambda <= 0.0 || lambda >= 1.0) throw ValidationError("dsi: lambda must be in (0,1)");
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("dsi: alpha must be in [0,1]");
    if (similarity_radius <= 0.0)
      throw ValidationError("dsi: similarity_radius must be positive");
  }
};

// ---- plain API -----------------------------------------------------------------

// Lifts queries and keys onto the manifold, computes pairwise Lorentzian
// similarities, zeroes entries <= lambda, then row-softmaxes. Rows sum to 1;
// an all-zero row softmaxes to the uniform row.
Mat thresholded_attention_map(const Mat& Q, const Mat& K, double lambda);

// CSA(target, source): the target supplies queries, the source keys/values.
Mat cross_space_attention(const Mat& target, const Mat& source, const Mat& Wq, const Mat& Wk,
                          const Mat& Wv, const DsiParams& p);

// ---- recorded (tensor) path -------------------------------------------------------

struct CsaWeightsT {
  diff::Tensor Wq, Wk, Wv;  // d x d each
};

struct DsiWeightsT {
  CsaWeightsT e_from_h;  // enhances V_E using V_H
  CsaWeightsT h_from_e;  // enhances V_H using V_E'
};

diff::Tensor thresholded_attention_map_t(diff::Tensor Q, diff::Tensor K, const DsiParams& p);

diff::Tensor cross_space_attention_t(diff::Tensor target, diff::Tensor source,
                                     const CsaWeightsT& w, const DsiParams& p);

struct DualRepT {
  diff::Tensor v_e_prime;  // T x d
  diff::Tensor v_h_prime;  // T x d (origin-tangent coordinates)
  diff::Tensor v_f;        // T x d fused
};

// V_E' = alpha * CSA(V_E, V_H) + V_E
// V_H' = alpha * CSA(V_H, V_E') + V_H          (sequential, as printed)
// V_F  = window-2 stride-2 max-pool over the interleaved [V_E' (+) V_H']
DualRepT dual_space_fuse_t(diff::Tensor v_e, diff::Tensor v_h_log, const DsiWeightsT& w,
                           const DsiParams& p);

}  // namespace dsrl
