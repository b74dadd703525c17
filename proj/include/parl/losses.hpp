#pragma once

#include <span>
#include <vector>

namespace parl {

// Numerically stable scalar loss primitives shared by every trainer.

// Max-shifted log(sum(exp(v))). Throws on empty input.
double log_sum_exp(std::span<const double> values);

// |tau - 1(u < 0)| * u^2 with tau in (0, 1).
double expectile_loss(double u, double tau);

// -log softmax(logits)[action], max-shifted.
double softmax_cross_entropy(std::span<const double> logits, int action);

// softmax written into `out` (same length as logits).
void softmax(std::span<const double> logits, std::span<double> out);

// log(sigmoid(x)) without overflow on either tail.
double log_sigmoid(double x);

double sigmoid(double x);

}  // namespace parl
