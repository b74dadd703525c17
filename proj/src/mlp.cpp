#include "parl/mlp.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "parl/rng.hpp"

namespace parl {

namespace {

// out[n x cols] = x[n x rows] * w[rows x cols] + b, accumulation ordered over
// rows so the inner loop is a contiguous fused multiply-add the compiler can
// vectorize without reassociation.
void affine_batch(std::span<const double> x, int n, int rows, int cols, std::span<const double> w,
                  std::span<const double> b, double* out) {
  for (int i = 0; i < n; ++i) {
    double* o = out + static_cast<std::size_t>(i) * cols;
    std::memcpy(o, b.data(), sizeof(double) * static_cast<std::size_t>(cols));
    const double* xi = x.data() + static_cast<std::size_t>(i) * rows;
    for (int k = 0; k < rows; ++k) {
      const double xv = xi[k];
      if (xv == 0.0) continue;
      const double* wk = w.data() + static_cast<std::size_t>(k) * cols;
      for (int j = 0; j < cols; ++j) o[j] += xv * wk[j];
    }
  }
}

void relu_batch(const std::vector<double>& z, std::vector<double>& a) {
  a.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
}

// Contiguous dot product with four independent accumulators; deterministic
// order, unrolled enough for the vectorizer.
double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

// grads for one affine layer: dW[k][j] += in[i][k]*delta[i][j], db[j] += delta[i][j],
// and (optionally) din[i][k] = dot(delta[i], W[k]).
void backward_affine(std::span<const double> input, int n, int rows, int cols,
                     std::span<const double> w, std::span<const double> delta, double* dw,
                     double* db, double* din) {
  for (int i = 0; i < n; ++i) {
    const double* di = delta.data() + static_cast<std::size_t>(i) * cols;
    const double* xi = input.data() + static_cast<std::size_t>(i) * rows;
    for (int j = 0; j < cols; ++j) db[j] += di[j];
    for (int k = 0; k < rows; ++k) {
      const double xv = xi[k];
      if (xv != 0.0) {
        double* dwk = dw + static_cast<std::size_t>(k) * cols;
        for (int j = 0; j < cols; ++j) dwk[j] += xv * di[j];
      }
      if (din) din[static_cast<std::size_t>(i) * rows + k] = dot(di, w.data() + static_cast<std::size_t>(k) * cols, cols);
    }
  }
}

}  // namespace

Mlp Mlp::init(MlpDims dims, std::uint64_t seed) {
  Mlp net(dims);
  Rng rng(seed);
  auto fill = [&rng](std::span<double> dst, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : dst) v = (2.0 * rng.uniform01() - 1.0) * bound;
  };
  fill(net.w1(), dims.in);
  fill(net.b1(), dims.in);
  fill(net.w2(), dims.h1);
  fill(net.b2(), dims.h1);
  fill(net.w3(), dims.h2);
  fill(net.b3(), dims.h2);
  return net;
}

std::vector<double> Mlp::forward(std::span<const double> observation) const {
  if (observation.size() != static_cast<std::size_t>(dims_.in)) {
    throw std::invalid_argument("Mlp::forward: observation dimension mismatch");
  }
  BatchCache cache;
  forward_batch(*this, observation, 1, cache);
  return cache.out;
}

void forward_batch(const Mlp& net, std::span<const double> x, int n, BatchCache& cache) {
  const MlpDims& d = net.dims();
  if (x.size() != static_cast<std::size_t>(n) * d.in) {
    throw std::invalid_argument("forward_batch: input size mismatch");
  }
  cache.n = n;
  cache.x.assign(x.begin(), x.end());
  cache.z1.resize(static_cast<std::size_t>(n) * d.h1);
  cache.z2.resize(static_cast<std::size_t>(n) * d.h2);
  cache.out.resize(static_cast<std::size_t>(n) * d.out);

  affine_batch(x, n, d.in, d.h1, net.w1(), net.b1(), cache.z1.data());
  relu_batch(cache.z1, cache.a1);
  affine_batch(cache.a1, n, d.h1, d.h2, net.w2(), net.b2(), cache.z2.data());
  relu_batch(cache.z2, cache.a2);
  affine_batch(cache.a2, n, d.h2, d.out, net.w3(), net.b3(), cache.out.data());
}

void backward_batch(const Mlp& net, const BatchCache& cache, std::span<const double> dout,
                    std::vector<double>& grads) {
  const MlpDims& d = net.dims();
  const int n = cache.n;
  if (dout.size() != static_cast<std::size_t>(n) * d.out) {
    throw std::invalid_argument("backward_batch: dout size mismatch");
  }
  grads.assign(static_cast<std::size_t>(d.param_count()), 0.0);

  // Flat gradient layout mirrors Mlp: w1 b1 w2 b2 w3 b3.
  double* g = grads.data();
  double* gw1 = g;
  double* gb1 = gw1 + static_cast<std::size_t>(d.in) * d.h1;
  double* gw2 = gb1 + d.h1;
  double* gb2 = gw2 + static_cast<std::size_t>(d.h1) * d.h2;
  double* gw3 = gb2 + d.h2;
  double* gb3 = gw3 + static_cast<std::size_t>(d.h2) * d.out;

  std::vector<double> delta2(static_cast<std::size_t>(n) * d.h2);
  backward_affine(cache.a2, n, d.h2, d.out, net.w3(), dout, gw3, gb3, delta2.data());
  for (std::size_t i = 0; i < delta2.size(); ++i) {
    if (cache.z2[i] <= 0.0) delta2[i] = 0.0;
  }

  std::vector<double> delta1(static_cast<std::size_t>(n) * d.h1);
  backward_affine(cache.a1, n, d.h1, d.h2, net.w2(), delta2, gw2, gb2, delta1.data());
  for (std::size_t i = 0; i < delta1.size(); ++i) {
    if (cache.z1[i] <= 0.0) delta1[i] = 0.0;
  }

  backward_affine(cache.x, n, d.in, d.h1, net.w1(), delta1, gw1, gb1, nullptr);
}

}  // namespace parl
