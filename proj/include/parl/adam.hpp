#pragma once

#include <vector>

namespace parl {

struct AdamState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long step = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t param_count, double lr = 3e-4)
      : learning_rate(lr), m(param_count, 0.0), v(param_count, 0.0) {}
};

// Global-norm clips `grads` to clip_norm in place, then applies one
// bias-corrected Adam update to `params`.
// Throws std::runtime_error("divergence detected") on non-finite gradients.
void adam_step(std::vector<double>& params, std::vector<double>& grads, AdamState& state,
               double clip_norm);

double global_norm(const std::vector<double>& values);

}  // namespace parl
