#pragma once

#include <cstdint>
#include <vector>

#include "dsrl/linalg.hpp"
#include "dsrl/manifold.hpp"
#include "dsrl/tensor.hpp"

namespace dsrl {

// Curvature-preserving hyperbolic layers. The time coordinate of every output
// is recomputed as sqrt(|phi|^2 - 1/K), which keeps results on the manifold
// for any weights (the f_x(M) construction).

enum class HyperLinearMode { kDropout, kActivationNorm };

struct HyperLinearParams {
  Mat W;                  // m x (n+1)
  std::vector<double> v;  // n+1 (gate weights; activation_norm mode only)
  std::vector<double> b;  // m   (bias inside phi; activation_norm mode only)
  double b_prime = 0.0;
  double lambda_phi = 1.0;  // scale of the sigmoid gate, > 0
  HyperLinearMode mode = HyperLinearMode::kActivationNorm;
  double dropout_rate = 0.0;
};

struct HyperClassifierParams {
  std::vector<double> W;  // ambient weight vector, length d+1
  double epsilon = 1.0;
  double bias = 0.0;
};

// ---- plain API ---------------------------------------------------------------

// Applies the manifold-adapted matrix f_x(M) to x: output = [sqrt(|Wx|^2-1/K); Wx]
// where M = [v^T; W]. Throws GeometryError when v^T x = 0 (the adaptation
// prefactor divides by it).
LorentzPoint f_x_M(const Mat& M, const LorentzPoint& x);

// y = HL(x) = [sqrt(|phi|^2 - 1/K); phi] with the mode-dependent phi:
//   dropout:          phi = W dropout(x)
//   activation_norm:  phi = lambda * sigmoid(v^T x + b') / |W relu(x) + b| * (W relu(x) + b)
LorentzPoint hyper_linear(const LorentzPoint& x, const HyperLinearParams& p, bool training,
                          uint64_t seed = 0);

// S = sigmoid(eps + eps <F,W>_L + b), strictly inside (0,1).
double hyper_classifier(const LorentzPoint& F, const HyperClassifierParams& p);

// ---- recorded (tensor) path ---------------------------------------------------
//
// Rows of X are points on the manifold (T x (n+1)). Weight tensors live on the
// same tape as X.

struct HyperLinearLayerT {
  diff::Tensor W;        // m x (n+1)
  diff::Tensor v;        // 1 x (n+1), activation_norm only
  diff::Tensor b;        // 1 x m,     activation_norm only
  diff::Tensor b_prime;  // 1 x 1,     activation_norm only
  double lambda_phi = 1.0;
  HyperLinearMode mode = HyperLinearMode::kActivationNorm;
  double dropout_rate = 0.0;
};

diff::Tensor hyper_linear_t(diff::Tensor X, const HyperLinearLayerT& p, bool training,
                            uint64_t seed);

// scores in (0,1), shape T x 1. W is 1 x (d+1), b is 1 x 1.
diff::Tensor hyper_classifier_t(diff::Tensor X, diff::Tensor W, diff::Tensor b, double epsilon);

}  // namespace dsrl
