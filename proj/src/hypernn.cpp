#include "dsrl/hypernn.hpp"

#include <cmath>

#include "dsrl/rng.hpp"

namespace dsrl {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LorentzPoint from_spatial(const std::vector<double>& phi, const ManifoldConfig& cfg) {
  double sq = 0.0;
  for (double p : phi) sq += p * p;
  std::vector<double> out(phi.size() + 1);
  out[0] = std::sqrt(sq - 1.0 / cfg.curvature);
  for (size_t i = 0; i < phi.size(); ++i) out[i + 1] = phi[i];
  return LorentzPoint(std::move(out), cfg);
}

}  // namespace

LorentzPoint f_x_M(const Mat& M, const LorentzPoint& x) {
  const int n1 = x.ambient_dim();
  if (M.cols != n1) throw DimensionError("f_x_M: matrix columns must match ambient dim");
  if (M.rows < 2) throw DimensionError("f_x_M: matrix needs a v row and at least one W row");
  const int m = M.rows - 1;
  // first row of M is v^T; the remaining rows are W
  double vx = 0.0;
  for (int j = 0; j < n1; ++j) vx += M.at(0, j) * x.coords()[static_cast<size_t>(j)];
  if (std::abs(vx) < 1e-12)
    throw GeometryError("f_x_M: degenerate direction, v^T x = 0");
  std::vector<double> wx(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n1; ++j)
      wx[static_cast<size_t>(i)] += M.at(i + 1, j) * x.coords()[static_cast<size_t>(j)];
  return from_spatial(wx, x.config());
}

LorentzPoint hyper_linear(const LorentzPoint& x, const HyperLinearParams& p, bool training,
                          uint64_t seed) {
  const int n1 = x.ambient_dim();
  if (p.W.cols != n1) throw DimensionError("hyper_linear: W columns must match ambient dim");
  if (p.lambda_phi <= 0.0) throw ValidationError("hyper_linear: lambda must be positive");
  const int m = p.W.rows;
  std::vector<double> phi(static_cast<size_t>(m), 0.0);

  if (p.mode == HyperLinearMode::kDropout) {
    std::vector<double> xd(x.coords());
    if (training && p.dropout_rate > 0.0) {
      SplitMix64 sm(seed);
      const double keep_scale = 1.0 / (1.0 - p.dropout_rate);
      for (double& c : xd) {
        const double u = static_cast<double>(sm.next() >> 11) * 0x1.0p-53;
        c = (u >= p.dropout_rate) ? c * keep_scale : 0.0;
      }
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n1; ++j) phi[static_cast<size_t>(i)] += p.W.at(i, j) * xd[static_cast<size_t>(j)];
  } else {
    if (static_cast<int>(p.v.size()) != n1)
      throw DimensionError("hyper_linear: v must match ambient dim");
    if (static_cast<int>(p.b.size()) != m)
      throw DimensionError("hyper_linear: b must match output dim");
    std::vector<double> hx(x.coords());
    for (double& c : hx) c = c > 0.0 ? c : 0.0;  // h = relu
    std::vector<double> u(static_cast<size_t>(m));
    double norm_sq = 0.0;
    for (int i = 0; i < m; ++i) {
      double s = p.b[static_cast<size_t>(i)];
      for (int j = 0; j < n1; ++j) s += p.W.at(i, j) * hx[static_cast<size_t>(j)];
      u[static_cast<size_t>(i)] = s;
      norm_sq += s * s;
    }
    const double gate = p.lambda_phi * sigmoid_scalar(dot(p.v, x.coords()) + p.b_prime);
    const double norm = std::sqrt(norm_sq);
    if (norm > 0.0)
      for (int i = 0; i < m; ++i) phi[static_cast<size_t>(i)] = gate * u[static_cast<size_t>(i)] / norm;
    // |W h(x) + b| = 0 leaves phi = 0: the output is the origin
  }

  for (double v : phi)
    if (!std::isfinite(v)) throw NumericError("hyper_linear: non-finite phi");
  return from_spatial(phi, x.config());
}

double hyper_classifier(const LorentzPoint& F, const HyperClassifierParams& p) {
  if (static_cast<int>(p.W.size()) != F.ambient_dim())
    throw DimensionError("hyper_classifier: weight length must match ambient dim");
  if (p.epsilon <= 0.0) throw ValidationError("hyper_classifier: epsilon must be positive");
  const double ip = lorentz_inner(F.coords(), p.W);
  const double s = sigmoid_scalar(p.epsilon + p.epsilon * ip + p.bias);
  // keep scores strictly inside (0,1) even where sigmoid saturates in double
  return std::min(std::max(s, 1e-12), 1.0 - 1e-12);
}

// ---- recorded path -----------------------------------------------------------

diff::Tensor hyper_linear_t(diff::Tensor X, const HyperLinearLayerT& p, bool training,
                            uint64_t seed) {
  using namespace diff;
  if (p.lambda_phi <= 0.0) throw ValidationError("hyper_linear_t: lambda must be positive");
  Tape& t = *X.tape();
  Tensor phi;
  if (p.mode == HyperLinearMode::kDropout) {
    Tensor xd = dropout(X, p.dropout_rate, seed, training);
    phi = matmul(xd, transpose(p.W));
  } else {
    Tensor u = add(matmul(relu(X), transpose(p.W)), p.b);          // T x m
    Tensor gate = sigmoid(add(matmul(X, transpose(p.v)), p.b_prime));  // T x 1
    phi = mul(unit_rows(u), scale(gate, p.lambda_phi));
  }
  // time coordinate: sqrt(|phi|^2 + 1) for K = -1
  Tensor sq = sum_rows(mul(phi, phi));
  Tensor time = diff::sqrt(add(sq, scalar_const(t, 1.0)));
  return concat_cols(time, phi);
}

diff::Tensor hyper_classifier_t(diff::Tensor X, diff::Tensor W, diff::Tensor b, double epsilon) {
  using namespace diff;
  if (epsilon <= 0.0) throw ValidationError("hyper_classifier_t: epsilon must be positive");
  Tape& t = *X.tape();
  Tensor ip = matmul(X, transpose(lorentz_flip(W)));  // T x 1
  Tensor arg = add(add(scale(ip, epsilon), scalar_const(t, epsilon)), b);
  return clamp_max(clamp_min(sigmoid(arg), 1e-12), 1.0 - 1e-12);
}

}  // namespace dsrl
