#pragma once

#include <cstdint>
#include <vector>

#include "dsrl/hypernn.hpp"
#include "dsrl/linalg.hpp"
#include "dsrl/manifold.hpp"
#include "dsrl/tensor.hpp"

namespace dsrl {

// Graph construction and message passing for both branches. Semantic graphs
// are row-stochastic before thresholding; the LSHAD rule zeroes weak edges
// without renormalizing (Eq. 16's denominator renormalizes geometrically).

struct LshadParams {
  double beta = 0.8;
  double gamma = 1.2;
};

struct TemporalParams {
  double sigma = 2.718281828459045;  // bandwidth, empirically e
};

enum class GraphKind { kSemantic, kTemporal };
enum class GraphSpace { kHyperbolic, kEuclidean };

struct MessageGraph {
  Mat A;  // T x T, entries >= 0
  GraphKind kind = GraphKind::kSemantic;
  GraphSpace space = GraphSpace::kHyperbolic;
  int layer_index = 1;
};

// ---- plain API ---------------------------------------------------------------

// Ls(x,y) = exp(-d_L(x,y)) in (0,1], 1 iff x = y.
double lorentz_similarity(const LorentzPoint& x, const LorentzPoint& y);

// Row-wise softmax of the pairwise Lorentzian-similarity matrix.
MessageGraph semantic_adjacency(const std::vector<LorentzPoint>& points);

// A[i][j] = exp(-|i-j| / sigma); symmetric, unit diagonal.
MessageGraph temporal_adjacency(int T, const TemporalParams& p);

// Fully connected form: 1/2 sum_{i,j} d_L(x_i,x_j)^2.
double hyperbolic_dirichlet_energy(const std::vector<LorentzPoint>& points);

// Degree-normalized form, for the property suite (unused by the pipeline):
// 1/2 sum_{i,j} d(exp_o(log_o(x_i)/sqrt(1+deg_i)), exp_o(log_o(x_j)/sqrt(1+deg_j)))^2
double hyperbolic_dirichlet_energy_general(const std::vector<LorentzPoint>& points,
                                           const std::vector<double>& degrees);

// sigmoid(beta*k - gamma + 1/(E+1)); increasing in k, decreasing in E.
double lshad(double energy, int k, const LshadParams& p);

// Zeroes entries below theta; kept entries unchanged, no renormalization.
MessageGraph apply_lshad_rule(const MessageGraph& g, double theta);

// MA(y_i) = sum_j A_ij y_j / (sqrt(-K) |  |sum_k A_ik y_k|_L  |). Outputs land
// exactly on the manifold. All-zero rows raise a GeometryError (isolated node).
std::vector<LorentzPoint> hyperbolic_aggregate(const MessageGraph& g,
                                               const std::vector<LorentzPoint>& points);

// Row softmax of max(0, cosine(x_i, x_j)); zero rows give uniform rows.
MessageGraph euclid_cosine_adjacency(const Mat& X);

// relu(A X W)
Mat gcn_layer(const Mat& X, const MessageGraph& g, const Mat& W);

// One HE-GCN layer: hyper_linear -> semantic adjacency -> HDE -> LSHAD
// threshold -> aggregate. Isolated nodes fall back to a self-loop.
struct HeGcnLayerParams {
  HyperLinearParams linear;
  LshadParams lshad;
};
std::vector<LorentzPoint> he_gcn_layer(const std::vector<LorentzPoint>& points, int k,
                                       const HeGcnLayerParams& p, bool training = false,
                                       uint64_t seed = 0);

// ---- recorded (tensor) path ----------------------------------------------------

// Pairwise geodesic distances between manifold rows: T x T.
diff::Tensor lorentz_distance_t(diff::Tensor X);
// Row softmax of exp(-distance): the semantic adjacency.
diff::Tensor semantic_adjacency_t(diff::Tensor X);
// 1/2 sum of squared pairwise distances, 1x1.
diff::Tensor hde_t(diff::Tensor X);
// LSHAD as a recorded scalar from the energy tensor.
diff::Tensor lshad_t(diff::Tensor energy, int k, const LshadParams& p);
// Masks A by comparing the given similarity values against theta (Eq. 15
// compares the Lorentzian similarities, not the softmax weights; kept edges
// keep their softmax weight). Isolated rows get a constant self-loop of 1.
diff::Tensor apply_lshad_mask_t(diff::Tensor A, const std::vector<double>& similarity,
                                double theta);
// Eq. 16 aggregation; throws GeometryError if any aggregated row is not
// timelike.
diff::Tensor hyperbolic_aggregate_t(diff::Tensor A, diff::Tensor Y);
diff::Tensor euclid_cosine_adjacency_t(diff::Tensor X);
diff::Tensor gcn_layer_t(diff::Tensor X, diff::Tensor A, diff::Tensor W);

struct HeGcnLayerT {
  HyperLinearLayerT linear;
  LshadParams lshad;
  bool fixed_threshold = false;  // ablation: constant theta instead of LSHAD
  double theta_fixed = 0.5;
};
diff::Tensor he_gcn_layer_t(diff::Tensor X, int k, const HeGcnLayerT& p, bool training,
                            uint64_t seed);

}  // namespace dsrl
