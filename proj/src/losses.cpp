#include "parl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace parl {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

double expectile_loss(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("expectile_loss: tau must be in (0,1)");
  const double w = (u < 0.0) ? (1.0 - tau) : tau;
  return w * u * u;
}

double softmax_cross_entropy(std::span<const double> logits, int action) {
  if (action < 0 || static_cast<std::size_t>(action) >= logits.size()) {
    throw std::invalid_argument("softmax_cross_entropy: action out of range");
  }
  return log_sum_exp(logits) - logits[static_cast<std::size_t>(action)];
}

void softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.size() != out.size() || logits.empty()) {
    throw std::invalid_argument("softmax: bad sizes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= s;
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace parl
