#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsrl/errors.hpp"
#include "dsrl/linalg.hpp"

namespace dsrl::diff {

class Tape;

// Handle to a node on a recording tape. All tensors are rank-2 (rows x cols),
// row-major, double precision; scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;

  int rows() const;
  int cols() const;
  size_t size() const { return static_cast<size_t>(rows()) * cols(); }
  const std::vector<double>& value() const;
  const std::vector<double>& grad() const;  // valid after Tape::backward
  bool needs_grad() const;
  double scalar() const;  // value of a 1x1 tensor
  Mat to_mat() const;

  bool valid() const { return tape_ != nullptr; }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Tensor(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// A recording of forward operations. One tape per training thread; nodes are
// immutable after creation and backward() replays the recorded vector-Jacobian
// products in reverse order.
class Tape {
 public:
  struct Node {
    int r = 0, c = 0;
    std::vector<double> val;
    std::vector<double> grad;
    bool needs_grad = false;
    std::function<void(Tape&)> vjp;  // empty for leaves/constants
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor make(int r, int c, std::vector<double> val, bool needs_grad,
              std::function<void(Tape&)> vjp = {});

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Computes gradients of a scalar loss for every needs_grad node.
  // Deterministic for a fixed op order.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

// ---- construction ----------------------------------------------------------
Tensor constant(Tape& t, int r, int c, std::vector<double> val);
Tensor constant(Tape& t, const Mat& m);
Tensor scalar_const(Tape& t, double v);
Tensor leaf(Tape& t, int r, int c, std::vector<double> val, bool needs_grad = true);

// ---- elementwise binary (2-D broadcasting: any dim may be 1 on either side)
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor div(Tensor a, Tensor b);

// ---- linear algebra --------------------------------------------------------
Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor a);
Tensor concat_cols(Tensor a, Tensor b);
Tensor interleave_cols(Tensor a, Tensor b);  // out col 2i = a_i, 2i+1 = b_i
Tensor slice_cols(Tensor a, int first, int count);

// ---- elementwise unary -----------------------------------------------------
Tensor sigmoid(Tensor a);
Tensor relu(Tensor a);
Tensor exp(Tensor a);
Tensor log(Tensor a);   // domain error at x <= 0
Tensor sqrt(Tensor a);  // domain error at x < 0
Tensor cosh(Tensor a);
Tensor sinh(Tensor a);
// acosh with the manifold guard: inputs below 1 - 1e-9 are a domain error,
// [1-tol, 1) clamps silently; the gradient is zeroed for inputs <= 1 + 1e-12
// to step around the derivative singularity.
Tensor acosh(Tensor a);
Tensor clamp_min(Tensor a, double lo);
Tensor clamp_max(Tensor a, double hi);
Tensor scale(Tensor a, double s);

// ---- softmax / reductions --------------------------------------------------
Tensor row_softmax(Tensor a);
Tensor col_softmax(Tensor a);
Tensor sum_all(Tensor a);   // 1x1
Tensor mean_all(Tensor a);  // 1x1
Tensor sum_rows(Tensor a);  // r x 1, sum along axis 1
Tensor row_norm(Tensor a);  // r x 1 Euclidean norms (zero rows get zero grad)
Tensor unit_rows(Tensor a); // rowwise a / |a|; zero rows stay zero

// ---- structural ops --------------------------------------------------------
Tensor maxpool_cols(Tensor a, int window, int stride);
Tensor shift_rows(Tensor a, int delta);  // +1 shifts rows down, zero fill
Tensor topk_mean(Tensor a, int k);       // mean of k largest elements, 1x1
// Inverted dropout: train scales kept entries by 1/(1-rate); eval is identity.
// Bit-reproducible for a fixed seed.
Tensor dropout(Tensor a, double rate, uint64_t seed, bool training);
// Elementwise multiply by a constant 0/1 (or weight) mask of the same shape.
Tensor apply_mask(Tensor a, const std::vector<double>& mask);

// ---- Lorentz-geometry primitives ------------------------------------------
Tensor lorentz_flip(Tensor a);  // negate column 0
// Rowwise Euclidean-to-hyperboloid lift (K = -1): T x d -> T x (d+1),
// row e -> [cosh|e|, sinh|e| e/|e|]; zero rows map to the origin.
Tensor lift_rows(Tensor a);
// Rowwise log map at the origin: T x (d+1) manifold rows -> T x d tangent
// coordinates, computed from the spatial part as asinh(|p|) p/|p|.
Tensor log0_rows(Tensor a);

// ---- parameters ------------------------------------------------------------
struct Parameter {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<double> value;
};

}  // namespace dsrl::diff
