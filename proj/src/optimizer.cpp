#include "dsrl/optimizer.hpp"

#include <cmath>

namespace dsrl::diff {

double cosine_lr(const AdamConfig& cfg, int epoch) {
  const double phase = 3.14159265358979323846 * static_cast<double>(epoch) /
                       static_cast<double>(cfg.total_epochs);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(phase));
}

void adam_step(std::vector<Parameter>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const AdamConfig& cfg, int epoch) {
  if (grads.size() != params.size())
    throw ContractError("adam_step: gradient list does not match parameter list");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t p = 0; p < params.size(); ++p) {
      state.m[p].assign(params[p].value.size(), 0.0);
      state.v[p].assign(params[p].value.size(), 0.0);
    }
  }
  state.step += 1;
  const double lr = cosine_lr(cfg, epoch);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    auto& w = params[p].value;
    const auto& g = grads[p];
    if (g.size() != w.size()) throw DimensionError("adam_step: gradient shape mismatch");
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double grad_check(const ScalarFn& f, const std::vector<GradCheckInput>& inputs, double h) {
  // analytic gradients
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(leaf(tape, in.rows, in.cols, in.value));
    Tensor out = f(tape, leaves);
    if (out.rows() != 1 || out.cols() != 1)
      throw ContractError("grad_check: function must be scalar-valued");
    tape.backward(out);
    for (const Tensor& l : leaves) analytic.push_back(l.grad());
  }

  auto eval = [&](const std::vector<GradCheckInput>& ins) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(ins.size());
    for (const auto& in : ins) leaves.push_back(leaf(tape, in.rows, in.cols, in.value, false));
    return f(tape, leaves).scalar();
  };

  double worst = 0.0;
  std::vector<GradCheckInput> work = inputs;
  for (size_t p = 0; p < inputs.size(); ++p) {
    for (size_t i = 0; i < inputs[p].value.size(); ++i) {
      const double orig = work[p].value[i];
      work[p].value[i] = orig + h;
      const double fp = eval(work);
      work[p].value[i] = orig - h;
      const double fm = eval(work);
      work[p].value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace dsrl::diff
