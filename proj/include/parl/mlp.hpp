#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace parl {

// Fixed three-layer perceptron: in -> h1 (ReLU) -> h2 (ReLU) -> out (linear).
// Parameters live in one flat vector so the optimizer, gradient clipping,
// serialization, and finite-difference checks all operate on a single array.
//
// Weight layout is input-major (W[k*cols + j] maps input k to output j) so the
// batched forward/backward inner loops run over contiguous memory.

struct MlpDims {
  int in = 768;
  int h1 = 256;
  int h2 = 256;
  int out = 11;

  long long param_count() const {
    return static_cast<long long>(in) * h1 + h1 + static_cast<long long>(h1) * h2 + h2 +
           static_cast<long long>(h2) * out + out;
  }
  bool operator==(const MlpDims&) const = default;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpDims dims) : dims_(dims), p_(static_cast<std::size_t>(dims.param_count()), 0.0) {}

  // Uniform fan-in initialization: U(-1/sqrt(fan_in), +1/sqrt(fan_in)) for
  // weights and biases of each layer, drawn from the given seed.
  static Mlp init(MlpDims dims, std::uint64_t seed);

  const MlpDims& dims() const { return dims_; }
  std::vector<double>& flat() { return p_; }
  const std::vector<double>& flat() const { return p_; }

  std::span<double> w1() { return {p_.data() + off_w1(), static_cast<std::size_t>(dims_.in) * dims_.h1}; }
  std::span<double> b1() { return {p_.data() + off_b1(), static_cast<std::size_t>(dims_.h1)}; }
  std::span<double> w2() { return {p_.data() + off_w2(), static_cast<std::size_t>(dims_.h1) * dims_.h2}; }
  std::span<double> b2() { return {p_.data() + off_b2(), static_cast<std::size_t>(dims_.h2)}; }
  std::span<double> w3() { return {p_.data() + off_w3(), static_cast<std::size_t>(dims_.h2) * dims_.out}; }
  std::span<double> b3() { return {p_.data() + off_b3(), static_cast<std::size_t>(dims_.out)}; }

  std::span<const double> w1() const { return {p_.data() + off_w1(), static_cast<std::size_t>(dims_.in) * dims_.h1}; }
  std::span<const double> b1() const { return {p_.data() + off_b1(), static_cast<std::size_t>(dims_.h1)}; }
  std::span<const double> w2() const { return {p_.data() + off_w2(), static_cast<std::size_t>(dims_.h1) * dims_.h2}; }
  std::span<const double> b2() const { return {p_.data() + off_b2(), static_cast<std::size_t>(dims_.h2)}; }
  std::span<const double> w3() const { return {p_.data() + off_w3(), static_cast<std::size_t>(dims_.h2) * dims_.out}; }
  std::span<const double> b3() const { return {p_.data() + off_b3(), static_cast<std::size_t>(dims_.out)}; }

  // Single-observation forward pass.
  std::vector<double> forward(std::span<const double> observation) const;

 private:
  std::size_t off_w1() const { return 0; }
  std::size_t off_b1() const { return off_w1() + static_cast<std::size_t>(dims_.in) * dims_.h1; }
  std::size_t off_w2() const { return off_b1() + dims_.h1; }
  std::size_t off_b2() const { return off_w2() + static_cast<std::size_t>(dims_.h1) * dims_.h2; }
  std::size_t off_w3() const { return off_b2() + dims_.h2; }
  std::size_t off_b3() const { return off_w3() + static_cast<std::size_t>(dims_.h2) * dims_.out; }

  MlpDims dims_;
  std::vector<double> p_;
};

// Activations kept from a batched forward pass for the matching backward pass.
struct BatchCache {
  int n = 0;
  std::vector<double> x;    // n * in
  std::vector<double> z1;   // n * h1 (pre-activation)
  std::vector<double> a1;   // n * h1
  std::vector<double> z2;   // n * h2
  std::vector<double> a2;   // n * h2
  std::vector<double> out;  // n * out
};

// Runs `n` observations (rows of `x`) through the net; fills the cache.
void forward_batch(const Mlp& net, std::span<const double> x, int n, BatchCache& cache);

// Accumulates dLoss/dparams into `grads` (flat, same layout as net.flat())
// given dLoss/dout for every row of the cached batch. Gradients are summed
// over rows; callers divide by the batch size themselves if they mean "mean".
void backward_batch(const Mlp& net, const BatchCache& cache, std::span<const double> dout,
                    std::vector<double>& grads);

}  // namespace parl
