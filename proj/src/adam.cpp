#include "parl/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace parl {

double global_norm(const std::vector<double>& values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

void adam_step(std::vector<double>& params, std::vector<double>& grads, AdamState& state,
               double clip_norm) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  if (!(clip_norm > 0.0)) throw std::invalid_argument("adam_step: clip_norm must be positive");

  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw std::runtime_error("divergence detected: non-finite gradient");
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (double& g : grads) g *= scale;
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

}  // namespace parl
