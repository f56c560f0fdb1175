#pragma once

#include <cstdint>
#include <vector>

#include "dsrl/tensor.hpp"

namespace dsrl::diff {

// Adam with a cosine-annealed learning rate and no weight decay.
struct AdamConfig {
  double base_lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int total_epochs = 30;  // cosine schedule period
};

struct AdamState {
  int64_t step = 0;
  // moment buffers aligned with the parameter list handed to adam_step
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// lr(epoch) = base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs))
double cosine_lr(const AdamConfig& cfg, int epoch);

// Standard Adam update over a fixed parameter list. grads[i] must match
// params[i]'s value length. The state is lazily sized on first use.
void adam_step(std::vector<Parameter>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const AdamConfig& cfg, int epoch);

// ---- gradient verification --------------------------------------------------

struct GradCheckInput {
  int rows = 0, cols = 0;
  std::vector<double> value;
};

using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

// Central finite differences per coordinate against the recorded gradient.
// Returns the worst relative error with denominator max(|a|, |b|, 1e-8).
double grad_check(const ScalarFn& f, const std::vector<GradCheckInput>& inputs,
                  double h = 1e-5);

}  // namespace dsrl::diff
