#include "dsrl/graphs.hpp"

#include <algorithm>
#include <cmath>

namespace dsrl {

namespace {

void row_softmax_inplace(Mat& m) {
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
}

}  // namespace

double lorentz_similarity(const LorentzPoint& x, const LorentzPoint& y) {
  return std::exp(-geodesic_distance(x, y));
}

MessageGraph semantic_adjacency(const std::vector<LorentzPoint>& points) {
  const int T = static_cast<int>(points.size());
  if (T < 1) throw ContractError("semantic_adjacency: need at least one point");
  Mat A(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j)
      A.at(i, j) = lorentz_similarity(points[static_cast<size_t>(i)],
                                      points[static_cast<size_t>(j)]);
  row_softmax_inplace(A);
  return MessageGraph{std::move(A), GraphKind::kSemantic, GraphSpace::kHyperbolic, 1};
}

MessageGraph temporal_adjacency(int T, const TemporalParams& p) {
  if (T < 1) throw ContractError("temporal_adjacency: T must be >= 1");
  if (p.sigma <= 0.0) throw ValidationError("temporal_adjacency: sigma must be positive");
  Mat A(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) A.at(i, j) = std::exp(-std::abs(i - j) / p.sigma);
  return MessageGraph{std::move(A), GraphKind::kTemporal, GraphSpace::kHyperbolic, 1};
}

double hyperbolic_dirichlet_energy(const std::vector<LorentzPoint>& points) {
  double e = 0.0;
  for (size_t i = 0; i < points.size(); ++i)
    for (size_t j = 0; j < points.size(); ++j) {
      const double d = geodesic_distance(points[i], points[j]);
      e += d * d;
    }
  return 0.5 * e;
}

double hyperbolic_dirichlet_energy_general(const std::vector<LorentzPoint>& points,
                                           const std::vector<double>& degrees) {
  if (degrees.size() != points.size())
    throw DimensionError("hde_general: one degree per point required");
  std::vector<LorentzPoint> scaled;
  scaled.reserve(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    const auto o = LorentzPoint::origin(points[i].spatial_dim(), points[i].config());
    auto v = log_map(o, points[i]);
    const double s = 1.0 / std::sqrt(1.0 + degrees[i]);
    for (double& c : v.coords) c *= s;
    scaled.push_back(exp_map(o, v));
  }
  return hyperbolic_dirichlet_energy(scaled);
}

double lshad(double energy, int k, const LshadParams& p) {
  if (energy < 0.0) throw ContractError("lshad: energy must be >= 0");
  if (k < 1) throw ContractError("lshad: layer index must be >= 1");
  const double arg = p.beta * k - p.gamma + 1.0 / (energy + 1.0);
  return 1.0 / (1.0 + std::exp(-arg));
}

MessageGraph apply_lshad_rule(const MessageGraph& g, double theta) {
  MessageGraph out = g;
  for (double& v : out.A.a) v = (v >= theta) ? v : 0.0;
  return out;
}

std::vector<LorentzPoint> hyperbolic_aggregate(const MessageGraph& g,
                                               const std::vector<LorentzPoint>& points) {
  const int T = static_cast<int>(points.size());
  if (g.A.rows != T || g.A.cols != T)
    throw DimensionError("hyperbolic_aggregate: graph size must match point count");
  if (T == 0) return {};
  const auto cfg = points[0].config();
  const double sqrt_mk = std::sqrt(-cfg.curvature);
  const int n1 = points[0].ambient_dim();
  std::vector<LorentzPoint> out;
  out.reserve(points.size());
  for (int i = 0; i < T; ++i) {
    std::vector<double> v(static_cast<size_t>(n1), 0.0);
    bool nonzero = false;
    for (int j = 0; j < T; ++j) {
      const double a = g.A.at(i, j);
      if (a == 0.0) continue;
      if (a < 0.0) throw ContractError("hyperbolic_aggregate: negative edge weight");
      nonzero = true;
      for (int c = 0; c < n1; ++c)
        v[static_cast<size_t>(c)] += a * points[static_cast<size_t>(j)].coords()[static_cast<size_t>(c)];
    }
    if (!nonzero)
      throw GeometryError("hyperbolic_aggregate: isolated node (all-zero row)");
    const double q = lorentz_inner(v, v);
    if (q >= 0.0)
      throw GeometryError("hyperbolic_aggregate: aggregated vector is not timelike");
    const double denom = sqrt_mk * std::sqrt(-q);
    for (double& c : v) c /= denom;
    out.emplace_back(std::move(v), cfg);
  }
  return out;
}

MessageGraph euclid_cosine_adjacency(const Mat& X) {
  const int T = X.rows;
  if (T < 1) throw ContractError("euclid_cosine_adjacency: need at least one row");
  std::vector<double> norms(static_cast<size_t>(T), 0.0);
  for (int i = 0; i < T; ++i) {
    double s = 0.0;
    for (int j = 0; j < X.cols; ++j) s += X.at(i, j) * X.at(i, j);
    norms[static_cast<size_t>(i)] = std::sqrt(s);
  }
  Mat A(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j) {
      const double nn = norms[static_cast<size_t>(i)] * norms[static_cast<size_t>(j)];
      double c = 0.0;
      if (nn > 0.0) {
        for (int k = 0; k < X.cols; ++k) c += X.at(i, k) * X.at(j, k);
        c /= nn;
      }
      A.at(i, j) = c > 0.0 ? c : 0.0;
    }
  row_softmax_inplace(A);
  return MessageGraph{std::move(A), GraphKind::kSemantic, GraphSpace::kEuclidean, 1};
}

Mat gcn_layer(const Mat& X, const MessageGraph& g, const Mat& W) {
  Mat out = matmul(matmul(g.A, X), W);
  for (double& v : out.a) v = v > 0.0 ? v : 0.0;
  return out;
}

std::vector<LorentzPoint> he_gcn_layer(const std::vector<LorentzPoint>& points, int k,
                                       const HeGcnLayerParams& p, bool training,
                                       uint64_t seed) {
  std::vector<LorentzPoint> transformed;
  transformed.reserve(points.size());
  for (size_t i = 0; i < points.size(); ++i)
    transformed.push_back(
        hyper_linear(points[i], p.linear, training, seed + static_cast<uint64_t>(i)));
  MessageGraph g = semantic_adjacency(transformed);
  g.layer_index = k;
  const double energy = hyperbolic_dirichlet_energy(transformed);
  const double theta = lshad(energy, k, p.lshad);
  // The construct rule compares the Lorentzian similarities themselves (the
  // softmaxed weights live on a 1/T scale that any LSHAD value would wipe
  // out); surviving edges keep their softmax weight, no renormalization.
  MessageGraph pruned = g;
  const int T = static_cast<int>(points.size());
  for (int i = 0; i < T; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < T; ++j) {
      const double ls = lorentz_similarity(transformed[static_cast<size_t>(i)],
                                           transformed[static_cast<size_t>(j)]);
      if (ls < theta) pruned.A.at(i, j) = 0.0;
      row_sum += pruned.A.at(i, j);
    }
    if (row_sum == 0.0) pruned.A.at(i, i) = 1.0;  // isolated nodes keep themselves
  }
  return hyperbolic_aggregate(pruned, transformed);
}

// ---- recorded path -------------------------------------------------------------

diff::Tensor lorentz_distance_t(diff::Tensor X) {
  using namespace diff;
  Tensor G = matmul(lorentz_flip(X), transpose(X));  // <x_i, x_j>_L
  return diff::acosh(scale(G, -1.0));                // K = -1
}

diff::Tensor semantic_adjacency_t(diff::Tensor X) {
  using namespace diff;
  Tensor D = lorentz_distance_t(X);
  return row_softmax(diff::exp(scale(D, -1.0)));
}

diff::Tensor hde_t(diff::Tensor X) {
  using namespace diff;
  Tensor D = lorentz_distance_t(X);
  return scale(sum_all(mul(D, D)), 0.5);
}

diff::Tensor lshad_t(diff::Tensor energy, int k, const LshadParams& p) {
  using namespace diff;
  if (k < 1) throw ContractError("lshad_t: layer index must be >= 1");
  Tape& t = *energy.tape();
  Tensor inv = div(scalar_const(t, 1.0), add(energy, scalar_const(t, 1.0)));
  return sigmoid(add(inv, scalar_const(t, p.beta * k - p.gamma)));
}

diff::Tensor apply_lshad_mask_t(diff::Tensor A, const std::vector<double>& similarity,
                                double theta) {
  using namespace diff;
  const int T = A.rows();
  if (A.cols() != T) throw DimensionError("apply_lshad_mask_t: square matrix expected");
  if (similarity.size() != A.size())
    throw DimensionError("apply_lshad_mask_t: similarity size mismatch");
  std::vector<double> mask(similarity.size());
  for (size_t i = 0; i < similarity.size(); ++i) mask[i] = similarity[i] >= theta ? 1.0 : 0.0;
  std::vector<double> self_loop(similarity.size(), 0.0);
  bool any_isolated = false;
  for (int i = 0; i < T; ++i) {
    double row = 0.0;
    for (int j = 0; j < T; ++j) row += mask[static_cast<size_t>(i) * T + j];
    if (row == 0.0) {
      self_loop[static_cast<size_t>(i) * T + i] = 1.0;
      mask[static_cast<size_t>(i) * T + i] = 0.0;  // the self weight is the constant 1
      any_isolated = true;
    }
  }
  Tensor masked = apply_mask(A, mask);
  if (!any_isolated) return masked;
  return add(masked, constant(*A.tape(), T, T, std::move(self_loop)));
}

diff::Tensor hyperbolic_aggregate_t(diff::Tensor A, diff::Tensor Y) {
  using namespace diff;
  Tensor V = matmul(A, Y);
  Tensor q = sum_rows(mul(lorentz_flip(V), V));  // <v_i, v_i>_L per row
  for (double v : q.value())
    if (v >= 0.0)
      throw GeometryError("hyperbolic_aggregate_t: aggregated vector is not timelike");
  Tensor norm = diff::sqrt(scale(q, -1.0));  // sqrt(-K)=1 for K=-1
  return div(V, norm);
}

diff::Tensor euclid_cosine_adjacency_t(diff::Tensor X) {
  using namespace diff;
  Tensor U = unit_rows(X);
  Tensor C = relu(matmul(U, transpose(U)));
  return row_softmax(C);
}

diff::Tensor gcn_layer_t(diff::Tensor X, diff::Tensor A, diff::Tensor W) {
  using namespace diff;
  return relu(matmul(matmul(A, X), W));
}

diff::Tensor he_gcn_layer_t(diff::Tensor X, int k, const HeGcnLayerT& p, bool training,
                            uint64_t seed) {
  using namespace diff;
  Tensor H = hyper_linear_t(X, p.linear, training, seed);
  Tensor D = lorentz_distance_t(H);
  Tensor S = diff::exp(scale(D, -1.0));  // Lorentzian similarities
  Tensor A = row_softmax(S);
  double theta;
  if (p.fixed_threshold) {
    theta = p.theta_fixed;
  } else {
    Tensor E = scale(sum_all(mul(D, D)), 0.5);
    theta = lshad_t(E, k, p.lshad).scalar();
  }
  Tensor pruned = apply_lshad_mask_t(A, S.value(), theta);
  return hyperbolic_aggregate_t(pruned, H);
}

}  // namespace dsrl
