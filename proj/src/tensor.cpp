#include "dsrl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsrl/rng.hpp"

namespace dsrl::diff {

namespace {

Tape* same_tape(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape() || a.tape() == nullptr)
    throw ContractError("tensor op: operands must live on the same tape");
  return a.tape();
}

struct BinShape {
  int r, c;        // output
  int ra, ca, rb, cb;
  size_t a_idx(int i, int j) const {
    return static_cast<size_t>(ra == 1 ? 0 : i) * ca + (ca == 1 ? 0 : j);
  }
  size_t b_idx(int i, int j) const {
    return static_cast<size_t>(rb == 1 ? 0 : i) * cb + (cb == 1 ? 0 : j);
  }
};

BinShape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  BinShape s{0, 0, a.rows(), a.cols(), b.rows(), b.cols()};
  const bool r_ok = s.ra == s.rb || s.ra == 1 || s.rb == 1;
  const bool c_ok = s.ca == s.cb || s.ca == 1 || s.cb == 1;
  if (!r_ok || !c_ok) throw DimensionError(std::string(op) + ": shapes are not broadcastable");
  s.r = std::max(s.ra, s.rb);
  s.c = std::max(s.ca, s.cb);
  return s;
}

}  // namespace

// ---- Tensor accessors -------------------------------------------------------

int Tensor::rows() const { return tape_->node(id_).r; }
int Tensor::cols() const { return tape_->node(id_).c; }
const std::vector<double>& Tensor::value() const { return tape_->node(id_).val; }
const std::vector<double>& Tensor::grad() const { return tape_->node(id_).grad; }
bool Tensor::needs_grad() const { return tape_->node(id_).needs_grad; }

double Tensor::scalar() const {
  if (rows() != 1 || cols() != 1) throw ContractError("Tensor::scalar: tensor is not 1x1");
  return value()[0];
}

Mat Tensor::to_mat() const { return Mat(rows(), cols(), value()); }

// ---- Tape -------------------------------------------------------------------

Tensor Tape::make(int r, int c, std::vector<double> val, bool needs_grad,
                  std::function<void(Tape&)> vjp) {
  if (val.size() != static_cast<size_t>(r) * c)
    throw DimensionError("Tape::make: value length does not match shape");
  for (double v : val)
    if (!std::isfinite(v)) throw NumericError("Tape::make: non-finite value produced");
  Node n;
  n.r = r;
  n.c = c;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss lives on a different tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ContractError("backward: loss must be a scalar");
  if (nodes_.empty()) throw ContractError("backward: tape is empty");
  for (Node& n : nodes_) n.grad.assign(n.val.size(), 0.0);
  nodes_[static_cast<size_t>(loss.id())].grad[0] = 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.needs_grad && n.vjp) n.vjp(*this);
  }
}

// ---- construction -----------------------------------------------------------

Tensor constant(Tape& t, int r, int c, std::vector<double> val) {
  return t.make(r, c, std::move(val), false);
}

Tensor constant(Tape& t, const Mat& m) { return t.make(m.rows, m.cols, m.a, false); }

Tensor scalar_const(Tape& t, double v) { return t.make(1, 1, {v}, false); }

Tensor leaf(Tape& t, int r, int c, std::vector<double> val, bool needs_grad) {
  return t.make(r, c, std::move(val), needs_grad);
}

// ---- binary ops -------------------------------------------------------------

namespace {

template <typename FwdFn, typename BwdFn>
Tensor make_binary(Tensor a, Tensor b, const char* name, FwdFn fwd, BwdFn bwd) {
  Tape* t = same_tape(a, b);
  const BinShape s = broadcast_shape(a, b, name);
  std::vector<double> out(static_cast<size_t>(s.r) * s.c);
  {
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int i = 0; i < s.r; ++i)
      for (int j = 0; j < s.c; ++j)
        out[static_cast<size_t>(i) * s.c + j] = fwd(av[s.a_idx(i, j)], bv[s.b_idx(i, j)]);
  }
  const bool ng = a.needs_grad() || b.needs_grad();
  const int ia = a.id(), ib = b.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    // self id is assigned by make(); capture via counter
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      auto& gb = tp.node(ib).grad;
      const auto& av2 = tp.node(ia).val;
      const auto& bv2 = tp.node(ib).val;
      for (int i = 0; i < s.r; ++i)
        for (int j = 0; j < s.c; ++j) {
          const size_t oi = static_cast<size_t>(i) * s.c + j;
          const size_t aix = s.a_idx(i, j);
          const size_t bix = s.b_idx(i, j);
          bwd(g[oi], av2[aix], bv2[bix], &ga[aix], &gb[bix]);
        }
    };
  }
  return t->make(s.r, s.c, std::move(out), ng, std::move(vjp));
}

}  // namespace

Tensor add(Tensor a, Tensor b) {
  return make_binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double, double* da, double* db) {
        *da += g;
        *db += g;
      });
}

Tensor sub(Tensor a, Tensor b) {
  return make_binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double, double* da, double* db) {
        *da += g;
        *db -= g;
      });
}

Tensor mul(Tensor a, Tensor b) {
  return make_binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double x, double y, double* da, double* db) {
        *da += g * y;
        *db += g * x;
      });
}

Tensor div(Tensor a, Tensor b) {
  for (double v : b.value())
    if (v == 0.0) throw NumericError("div: division by zero");
  return make_binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double x, double y, double* da, double* db) {
        *da += g / y;
        *db -= g * x / (y * y);
      });
}

// ---- unary ops ----------------------------------------------------------

namespace {

template <typename FwdFn, typename DFn>
Tensor make_unary(Tensor a, FwdFn fwd, DFn dval) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  const auto& av = a.value();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& x = tp.node(ia).val;
      const auto& y = tp.node(self).val;
      auto& ga = tp.node(ia).grad;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dval(x[i], y[i]);
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

}  // namespace

Tensor sigmoid(Tensor a) {
  return make_unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(Tensor a) {
  return make_unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(Tensor a) {
  return make_unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(Tensor a) {
  for (double v : a.value())
    if (v <= 0.0) throw NumericError("log: input outside domain (x <= 0)");
  return make_unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(Tensor a) {
  for (double v : a.value())
    if (v < 0.0) throw NumericError("sqrt: input outside domain (x < 0)");
  return make_unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor cosh(Tensor a) {
  return make_unary(
      a, [](double x) { return std::cosh(x); }, [](double x, double) { return std::sinh(x); });
}

Tensor sinh(Tensor a) {
  return make_unary(
      a, [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

Tensor acosh(Tensor a) {
  for (double v : a.value())
    if (v < 1.0 - 1e-9) throw NumericError("acosh: input below domain (x < 1)");
  // The band [1-tol, 1+1e-12] is numerical zero: inputs there come from
  // coincident points whose inner product carries roundoff, so both the value
  // and the gradient are pinned to 0 to keep finite differences stable.
  return make_unary(
      a, [](double x) { return x <= 1.0 + 1e-12 ? 0.0 : std::acosh(x); },
      [](double x, double) {
        if (x <= 1.0 + 1e-12) return 0.0;
        return 1.0 / std::sqrt(x * x - 1.0);
      });
}

Tensor clamp_min(Tensor a, double lo) {
  return make_unary(
      a, [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Tensor clamp_max(Tensor a, double hi) {
  return make_unary(
      a, [hi](double x) { return x > hi ? hi : x; },
      [hi](double x, double) { return x > hi ? 0.0 : 1.0; });
}

Tensor scale(Tensor a, double s) {
  return make_unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(Tensor a, Tensor b) {
  Tape* t = same_tape(a, b);
  const int r = a.rows(), k = a.cols(), c = b.cols();
  if (b.rows() != k) throw DimensionError("matmul: inner dimensions differ");
  std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
  {
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int i = 0; i < r; ++i)
      for (int kk = 0; kk < k; ++kk) {
        const double aik = av[static_cast<size_t>(i) * k + kk];
        for (int j = 0; j < c; ++j)
          out[static_cast<size_t>(i) * c + j] += aik * bv[static_cast<size_t>(kk) * c + j];
      }
  }
  const bool ng = a.needs_grad() || b.needs_grad();
  const int ia = a.id(), ib = b.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& av2 = tp.node(ia).val;
      const auto& bv2 = tp.node(ib).val;
      auto& ga = tp.node(ia).grad;
      auto& gb = tp.node(ib).grad;
      // dA = G * B^T
      for (int i = 0; i < r; ++i)
        for (int kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          for (int j = 0; j < c; ++j)
            acc += g[static_cast<size_t>(i) * c + j] * bv2[static_cast<size_t>(kk) * c + j];
          ga[static_cast<size_t>(i) * k + kk] += acc;
        }
      // dB = A^T * G
      for (int kk = 0; kk < k; ++kk)
        for (int j = 0; j < c; ++j) {
          double acc = 0.0;
          for (int i = 0; i < r; ++i)
            acc += av2[static_cast<size_t>(i) * k + kk] * g[static_cast<size_t>(i) * c + j];
          gb[static_cast<size_t>(kk) * c + j] += acc;
        }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

Tensor transpose(Tensor a) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(j) * r + i] = av[static_cast<size_t>(i) * c + j];
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          ga[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
    };
  }
  return t->make(c, r, std::move(out), ng, std::move(vjp));
}

Tensor concat_cols(Tensor a, Tensor b) {
  Tape* t = same_tape(a, b);
  const int r = a.rows(), ca = a.cols(), cb = b.cols();
  if (b.rows() != r) throw DimensionError("concat_cols: row counts differ");
  const int c = ca + cb;
  std::vector<double> out(static_cast<size_t>(r) * c);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < ca; ++j)
      out[static_cast<size_t>(i) * c + j] = av[static_cast<size_t>(i) * ca + j];
    for (int j = 0; j < cb; ++j)
      out[static_cast<size_t>(i) * c + ca + j] = bv[static_cast<size_t>(i) * cb + j];
  }
  const bool ng = a.needs_grad() || b.needs_grad();
  const int ia = a.id(), ib = b.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      auto& gb = tp.node(ib).grad;
      for (int i = 0; i < r; ++i) {
        for (int j = 0; j < ca; ++j)
          ga[static_cast<size_t>(i) * ca + j] += g[static_cast<size_t>(i) * c + j];
        for (int j = 0; j < cb; ++j)
          gb[static_cast<size_t>(i) * cb + j] += g[static_cast<size_t>(i) * c + ca + j];
      }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

Tensor interleave_cols(Tensor a, Tensor b) {
  Tape* t = same_tape(a, b);
  const int r = a.rows(), ca = a.cols();
  if (b.rows() != r || b.cols() != ca)
    throw DimensionError("interleave_cols: shapes must match");
  const int c = 2 * ca;
  std::vector<double> out(static_cast<size_t>(r) * c);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < ca; ++j) {
      out[static_cast<size_t>(i) * c + 2 * j] = av[static_cast<size_t>(i) * ca + j];
      out[static_cast<size_t>(i) * c + 2 * j + 1] = bv[static_cast<size_t>(i) * ca + j];
    }
  const bool ng = a.needs_grad() || b.needs_grad();
  const int ia = a.id(), ib = b.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      auto& gb = tp.node(ib).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < ca; ++j) {
          ga[static_cast<size_t>(i) * ca + j] += g[static_cast<size_t>(i) * c + 2 * j];
          gb[static_cast<size_t>(i) * ca + j] += g[static_cast<size_t>(i) * c + 2 * j + 1];
        }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

Tensor slice_cols(Tensor a, int first, int count) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  if (first < 0 || count < 1 || first + count > c)
    throw DimensionError("slice_cols: range out of bounds");
  std::vector<double> out(static_cast<size_t>(r) * count);
  const auto& av = a.value();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < count; ++j)
      out[static_cast<size_t>(i) * count + j] = av[static_cast<size_t>(i) * c + first + j];
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < count; ++j)
          ga[static_cast<size_t>(i) * c + first + j] += g[static_cast<size_t>(i) * count + j];
    };
  }
  return t->make(r, count, std::move(out), ng, std::move(vjp));
}

// ---- softmax / reductions ---------------------------------------------------

namespace {

// softmax along contiguous strided groups; rows: stride 1, count = cols.
void softmax_inplace(std::vector<double>& v, size_t base, size_t stride, int n) {
  double mx = v[base];
  for (int i = 1; i < n; ++i) mx = std::max(mx, v[base + stride * i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const size_t ix = base + stride * i;
    v[ix] = std::exp(v[ix] - mx);
    sum += v[ix];
  }
  for (int i = 0; i < n; ++i) v[base + stride * i] /= sum;
}

Tensor softmax_axis(Tensor a, bool along_rows) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out = a.value();
  if (along_rows) {
    for (int i = 0; i < r; ++i) softmax_inplace(out, static_cast<size_t>(i) * c, 1, c);
  } else {
    for (int j = 0; j < c; ++j) softmax_inplace(out, static_cast<size_t>(j), c, r);
  }
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& s = tp.node(self).val;
      auto& ga = tp.node(ia).grad;
      const int groups = along_rows ? r : c;
      const int n = along_rows ? c : r;
      for (int gi = 0; gi < groups; ++gi) {
        const size_t base = along_rows ? static_cast<size_t>(gi) * c : static_cast<size_t>(gi);
        const size_t stride = along_rows ? 1 : static_cast<size_t>(c);
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += g[base + stride * i] * s[base + stride * i];
        for (int i = 0; i < n; ++i) {
          const size_t ix = base + stride * i;
          ga[ix] += s[ix] * (g[ix] - dot);
        }
      }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

}  // namespace

Tensor row_softmax(Tensor a) { return softmax_axis(a, true); }
Tensor col_softmax(Tensor a) { return softmax_axis(a, false); }

Tensor sum_all(Tensor a) {
  Tape* t = a.tape();
  double s = 0.0;
  for (double v : a.value()) s += v;
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const double g = tp.node(self).grad[0];
      for (double& d : tp.node(ia).grad) d += g;
    };
  }
  return t->make(1, 1, {s}, ng, std::move(vjp));
}

Tensor mean_all(Tensor a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  return scale(sum_all(a), inv);
}

Tensor sum_rows(Tensor a) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(r), 0.0);
  const auto& av = a.value();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(i)] += av[static_cast<size_t>(i) * c + j];
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) ga[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(i)];
    };
  }
  return t->make(r, 1, std::move(out), ng, std::move(vjp));
}

Tensor row_norm(Tensor a) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(static_cast<size_t>(r), 0.0);
  const auto& av = a.value();
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      const double v = av[static_cast<size_t>(i) * c + j];
      s += v * v;
    }
    out[static_cast<size_t>(i)] = std::sqrt(s);
  }
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& n = tp.node(self).val;
      const auto& x = tp.node(ia).val;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i) {
        if (n[static_cast<size_t>(i)] == 0.0) continue;
        const double gi = g[static_cast<size_t>(i)] / n[static_cast<size_t>(i)];
        for (int j = 0; j < c; ++j)
          ga[static_cast<size_t>(i) * c + j] += gi * x[static_cast<size_t>(i) * c + j];
      }
    };
  }
  return t->make(r, 1, std::move(out), ng, std::move(vjp));
}

Tensor unit_rows(Tensor a) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out = a.value();
  std::vector<double> norms(static_cast<size_t>(r), 0.0);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      const double v = out[static_cast<size_t>(i) * c + j];
      s += v * v;
    }
    const double n = std::sqrt(s);
    norms[static_cast<size_t>(i)] = n;
    if (n > 0.0)
      for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] /= n;
    // zero rows stay zero
  }
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& u = tp.node(self).val;  // unit rows
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i) {
        const double n = norms[static_cast<size_t>(i)];
        if (n == 0.0) continue;
        double dot = 0.0;
        for (int j = 0; j < c; ++j)
          dot += g[static_cast<size_t>(i) * c + j] * u[static_cast<size_t>(i) * c + j];
        for (int j = 0; j < c; ++j) {
          const size_t ix = static_cast<size_t>(i) * c + j;
          ga[ix] += (g[ix] - u[ix] * dot) / n;
        }
      }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

// ---- structural ops --------------------------------------------------------

Tensor maxpool_cols(Tensor a, int window, int stride) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  if (window < 1 || stride < 1) throw DimensionError("maxpool_cols: bad window/stride");
  if (c < window) throw DimensionError("maxpool_cols: fewer columns than window");
  const int oc = (c - window) / stride + 1;
  std::vector<double> out(static_cast<size_t>(r) * oc);
  std::vector<int> argmax(static_cast<size_t>(r) * oc);
  const auto& av = a.value();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < oc; ++j) {
      int best = j * stride;
      double bv = av[static_cast<size_t>(i) * c + best];
      for (int w = 1; w < window; ++w) {
        const int jj = j * stride + w;
        const double v = av[static_cast<size_t>(i) * c + jj];
        if (v > bv) {  // first max wins on ties
          bv = v;
          best = jj;
        }
      }
      out[static_cast<size_t>(i) * oc + j] = bv;
      argmax[static_cast<size_t>(i) * oc + j] = best;
    }
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < oc; ++j)
          ga[static_cast<size_t>(i) * c + argmax[static_cast<size_t>(i) * oc + j]] +=
              g[static_cast<size_t>(i) * oc + j];
    };
  }
  return t->make(r, oc, std::move(out), ng, std::move(vjp));
}

Tensor shift_rows(Tensor a, int delta) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.size(), 0.0);
  const auto& av = a.value();
  for (int i = 0; i < r; ++i) {
    const int src = i - delta;
    if (src < 0 || src >= r) continue;
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i) * c + j] = av[static_cast<size_t>(src) * c + j];
  }
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i) {
        const int src = i - delta;
        if (src < 0 || src >= r) continue;
        for (int j = 0; j < c; ++j)
          ga[static_cast<size_t>(src) * c + j] += g[static_cast<size_t>(i) * c + j];
      }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

Tensor topk_mean(Tensor a, int k) {
  Tape* t = a.tape();
  const int n = static_cast<int>(a.size());
  if (k < 1 || k > n) throw ContractError("topk_mean: k out of range");
  const auto& av = a.value();
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int i, int j) {
    if (av[static_cast<size_t>(i)] != av[static_cast<size_t>(j)])
      return av[static_cast<size_t>(i)] > av[static_cast<size_t>(j)];
    return i < j;  // deterministic tie break
  });
  idx.resize(static_cast<size_t>(k));
  double s = 0.0;
  for (int i : idx) s += av[static_cast<size_t>(i)];
  s /= k;
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const double g = tp.node(self).grad[0] / k;
      auto& ga = tp.node(ia).grad;
      for (int i : idx) ga[static_cast<size_t>(i)] += g;
    };
  }
  return t->make(1, 1, {s}, ng, std::move(vjp));
}

Tensor dropout(Tensor a, double rate, uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout: rate must be in [0,1)");
  if (!training) return a;  // identity at evaluation, no rescaling
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  SplitMix64 sm(seed);
  std::vector<double> mask(a.size());
  for (double& m : mask) {
    const double u = static_cast<double>(sm.next() >> 11) * 0x1.0p-53;
    m = (u >= rate) ? 1.0 / (1.0 - rate) : 0.0;
  }
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

Tensor apply_mask(Tensor a, const std::vector<double>& mask) {
  if (mask.size() != a.size()) throw DimensionError("apply_mask: mask size mismatch");
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  const auto& av = a.value();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * mask[i];
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    std::vector<double> m = mask;
    vjp = [=, m = std::move(m)](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * m[i];
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

// ---- Lorentz-geometry primitives -------------------------------------------

Tensor lorentz_flip(Tensor a) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  std::vector<double> out = a.value();
  for (int i = 0; i < r; ++i) out[static_cast<size_t>(i) * c] = -out[static_cast<size_t>(i) * c];
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          const size_t ix = static_cast<size_t>(i) * c + j;
          ga[ix] += (j == 0) ? -g[ix] : g[ix];
        }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

namespace {

// sinh(r)/r, stable at 0
double sinhc(double r) {
  if (r < 1e-4) {
    const double r2 = r * r;
    return 1.0 + r2 / 6.0 + r2 * r2 / 120.0;
  }
  return std::sinh(r) / r;
}

// (cosh r - sinhc r) / r^2, stable at 0
double sinhc_deriv_over_r(double r) {
  if (r < 1e-4) {
    const double r2 = r * r;
    return 1.0 / 3.0 + r2 / 30.0;
  }
  return (std::cosh(r) - sinhc(r)) / (r * r);
}

// asinh(t)/t, stable at 0
double asinhc(double t) {
  if (t < 1e-4) {
    const double t2 = t * t;
    return 1.0 - t2 / 6.0 + 3.0 * t2 * t2 / 40.0;
  }
  return std::asinh(t) / t;
}

// (1/sqrt(1+t^2) - asinhc t) / t^2, stable at 0
double asinhc_deriv_over_t(double t) {
  if (t < 1e-4) {
    const double t2 = t * t;
    return -1.0 / 3.0 + 0.3 * t2;
  }
  return (1.0 / std::sqrt(1.0 + t * t) - asinhc(t)) / (t * t);
}

}  // namespace

Tensor lift_rows(Tensor a) {
  Tape* t = a.tape();
  const int r = a.rows(), d = a.cols();
  const int c = d + 1;
  std::vector<double> out(static_cast<size_t>(r) * c);
  std::vector<double> rad(static_cast<size_t>(r));
  const auto& av = a.value();
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = av[static_cast<size_t>(i) * d + j];
      s += v * v;
    }
    const double rr = std::sqrt(s);
    rad[static_cast<size_t>(i)] = rr;
    out[static_cast<size_t>(i) * c] = std::cosh(rr);
    const double sc = sinhc(rr);
    for (int j = 0; j < d; ++j)
      out[static_cast<size_t>(i) * c + 1 + j] = sc * av[static_cast<size_t>(i) * d + j];
  }
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& e = tp.node(ia).val;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i) {
        const double rr = rad[static_cast<size_t>(i)];
        const double sc = sinhc(rr);
        const double c2 = sinhc_deriv_over_r(rr);
        const double g0 = g[static_cast<size_t>(i) * c];
        double egs = 0.0;  // e . g_spatial
        for (int j = 0; j < d; ++j)
          egs += e[static_cast<size_t>(i) * d + j] * g[static_cast<size_t>(i) * c + 1 + j];
        for (int j = 0; j < d; ++j) {
          const double ej = e[static_cast<size_t>(i) * d + j];
          ga[static_cast<size_t>(i) * d + j] +=
              g0 * sc * ej + sc * g[static_cast<size_t>(i) * c + 1 + j] + c2 * ej * egs;
        }
      }
    };
  }
  return t->make(r, c, std::move(out), ng, std::move(vjp));
}

Tensor log0_rows(Tensor a) {
  Tape* t = a.tape();
  const int r = a.rows(), c = a.cols();
  if (c < 2) throw DimensionError("log0_rows: need at least 2 columns");
  const int d = c - 1;
  std::vector<double> out(static_cast<size_t>(r) * d);
  std::vector<double> rad(static_cast<size_t>(r));
  const auto& av = a.value();
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = av[static_cast<size_t>(i) * c + 1 + j];
      s += v * v;
    }
    const double tt = std::sqrt(s);
    rad[static_cast<size_t>(i)] = tt;
    const double h = asinhc(tt);
    for (int j = 0; j < d; ++j)
      out[static_cast<size_t>(i) * d + j] = h * av[static_cast<size_t>(i) * c + 1 + j];
  }
  const bool ng = a.needs_grad();
  const int ia = a.id();
  std::function<void(Tape&)> vjp;
  if (ng) {
    const int self = t->size();
    vjp = [=](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& x = tp.node(ia).val;
      auto& ga = tp.node(ia).grad;
      for (int i = 0; i < r; ++i) {
        const double tt = rad[static_cast<size_t>(i)];
        const double h = asinhc(tt);
        const double c2 = asinhc_deriv_over_t(tt);
        double pg = 0.0;  // p . g
        for (int j = 0; j < d; ++j)
          pg += x[static_cast<size_t>(i) * c + 1 + j] * g[static_cast<size_t>(i) * d + j];
        for (int j = 0; j < d; ++j) {
          const double pj = x[static_cast<size_t>(i) * c + 1 + j];
          // time coordinate (column 0) gets no gradient: on-manifold rows are
          // fully determined by their spatial part
          ga[static_cast<size_t>(i) * c + 1 + j] +=
              h * g[static_cast<size_t>(i) * d + j] + c2 * pj * pg;
        }
      }
    };
  }
  return t->make(r, d, std::move(out), ng, std::move(vjp));
}

}  // namespace dsrl::diff
