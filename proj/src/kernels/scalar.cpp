#include <algorithm>

#include "meal/kernels/kernels.hpp"

namespace meal::kernels::detail {
namespace {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    real* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const real aip = a[i * k + p];
      const real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      real s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const real* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const real api = a[p * m + i];
      real* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void axpy(std::size_t n, real alpha, const real* x, real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

real dot(std::size_t n, const real* x, const real* y) {
  real s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

real sum(std::size_t n, const real* x) {
  real s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void affine(std::size_t n, real scale, real shift, const real* x, real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = scale * x[i] + shift;
}

void relu_forward(std::size_t n, const real* x, real* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] <= 0.0 ? 0.0 : x[i];
}

void relu_backward(std::size_t n, const real* x, const real* dy, real* dx) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void sgd_momentum(std::size_t n, real lr, real momentum, real weight_decay, real* w, const real* g,
                  real* v) {
  for (std::size_t i = 0; i < n; ++i) {
    const real grad = g[i] + weight_decay * w[i];
    v[i] = momentum * v[i] + grad;
    w[i] -= lr * v[i];
  }
}

constexpr KernelTable kScalar{"scalar",       gemm_nn, gemm_nt,      gemm_tn,       axpy,
                              dot,            sum,     affine,       relu_forward,  relu_backward,
                              sgd_momentum};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace meal::kernels::detail
