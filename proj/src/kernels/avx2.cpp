// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>

#include "meal/kernels/kernels.hpp"

namespace meal::kernels::detail {
namespace {

constexpr std::size_t kBlockK = 256;

inline real hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Register-blocked C[i0:i0+4, :] += A[i0:i0+4, k0:k1] * B[k0:k1, :].
// a(i, p) is read as a[i * a_row + p * a_col] so the same body serves A and A^T.
inline void block4(std::size_t n, std::size_t k0, std::size_t k1, const real* a, std::size_t a_row,
                   std::size_t a_col, const real* b, real* c) {
  const real* a0 = a;
  const real* a1 = a + a_row;
  const real* a2 = a + 2 * a_row;
  const real* a3 = a + 3 * a_row;
  real* c0 = c;
  real* c1 = c + n;
  real* c2 = c + 2 * n;
  real* c3 = c + 3 * n;
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d r00 = _mm256_loadu_pd(c0 + j), r01 = _mm256_loadu_pd(c0 + j + 4);
    __m256d r10 = _mm256_loadu_pd(c1 + j), r11 = _mm256_loadu_pd(c1 + j + 4);
    __m256d r20 = _mm256_loadu_pd(c2 + j), r21 = _mm256_loadu_pd(c2 + j + 4);
    __m256d r30 = _mm256_loadu_pd(c3 + j), r31 = _mm256_loadu_pd(c3 + j + 4);
    for (std::size_t p = k0; p < k1; ++p) {
      const real* bp = b + p * n + j;
      const __m256d b0 = _mm256_loadu_pd(bp);
      const __m256d b1 = _mm256_loadu_pd(bp + 4);
      const std::size_t ap = p * a_col;
      __m256d av = _mm256_broadcast_sd(a0 + ap);
      r00 = _mm256_fmadd_pd(av, b0, r00);
      r01 = _mm256_fmadd_pd(av, b1, r01);
      av = _mm256_broadcast_sd(a1 + ap);
      r10 = _mm256_fmadd_pd(av, b0, r10);
      r11 = _mm256_fmadd_pd(av, b1, r11);
      av = _mm256_broadcast_sd(a2 + ap);
      r20 = _mm256_fmadd_pd(av, b0, r20);
      r21 = _mm256_fmadd_pd(av, b1, r21);
      av = _mm256_broadcast_sd(a3 + ap);
      r30 = _mm256_fmadd_pd(av, b0, r30);
      r31 = _mm256_fmadd_pd(av, b1, r31);
    }
    _mm256_storeu_pd(c0 + j, r00);
    _mm256_storeu_pd(c0 + j + 4, r01);
    _mm256_storeu_pd(c1 + j, r10);
    _mm256_storeu_pd(c1 + j + 4, r11);
    _mm256_storeu_pd(c2 + j, r20);
    _mm256_storeu_pd(c2 + j + 4, r21);
    _mm256_storeu_pd(c3 + j, r30);
    _mm256_storeu_pd(c3 + j + 4, r31);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d r0 = _mm256_loadu_pd(c0 + j), r1 = _mm256_loadu_pd(c1 + j);
    __m256d r2 = _mm256_loadu_pd(c2 + j), r3 = _mm256_loadu_pd(c3 + j);
    for (std::size_t p = k0; p < k1; ++p) {
      const __m256d bv = _mm256_loadu_pd(b + p * n + j);
      const std::size_t ap = p * a_col;
      r0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a0 + ap), bv, r0);
      r1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a1 + ap), bv, r1);
      r2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a2 + ap), bv, r2);
      r3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a3 + ap), bv, r3);
    }
    _mm256_storeu_pd(c0 + j, r0);
    _mm256_storeu_pd(c1 + j, r1);
    _mm256_storeu_pd(c2 + j, r2);
    _mm256_storeu_pd(c3 + j, r3);
  }
  for (; j < n; ++j) {
    real s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
    for (std::size_t p = k0; p < k1; ++p) {
      const real bv = b[p * n + j];
      const std::size_t ap = p * a_col;
      s0 += a0[ap] * bv;
      s1 += a1[ap] * bv;
      s2 += a2[ap] * bv;
      s3 += a3[ap] * bv;
    }
    c0[j] = s0;
    c1[j] = s1;
    c2[j] = s2;
    c3[j] = s3;
  }
}

inline void block1(std::size_t n, std::size_t k0, std::size_t k1, const real* a, std::size_t a_col,
                   const real* b, real* c) {
  for (std::size_t p = k0; p < k1; ++p) {
    const __m256d av = _mm256_broadcast_sd(a + p * a_col);
    const real* bp = b + p * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4)
      _mm256_storeu_pd(c + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), _mm256_loadu_pd(c + j)));
    for (; j < n; ++j) c[j] += a[p * a_col] * bp[j];
  }
}

template <bool TransA>
void gemm_xn(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  const std::size_t a_row = TransA ? 1 : k;
  const std::size_t a_col = TransA ? m : 1;
  for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
    const std::size_t k1 = std::min(k, k0 + kBlockK);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) block4(n, k0, k1, a + i * a_row, a_row, a_col, b, c + i * n);
    for (; i < m; ++i) block1(n, k0, k1, a + i * a_row, a_col, b, c + i * n);
  }
}

real dot(std::size_t n, const real* x, const real* y) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  real s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b, real* c,
             bool accumulate) {
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const real* ai0 = a + i * k;
    const real* ai1 = ai0 + k;
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      const real* bj0 = b + j * k;
      const real* bj1 = bj0 + k;
      __m256d s00 = _mm256_setzero_pd(), s01 = _mm256_setzero_pd();
      __m256d s10 = _mm256_setzero_pd(), s11 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d x0 = _mm256_loadu_pd(ai0 + p), x1 = _mm256_loadu_pd(ai1 + p);
        const __m256d y0 = _mm256_loadu_pd(bj0 + p), y1 = _mm256_loadu_pd(bj1 + p);
        s00 = _mm256_fmadd_pd(x0, y0, s00);
        s01 = _mm256_fmadd_pd(x0, y1, s01);
        s10 = _mm256_fmadd_pd(x1, y0, s10);
        s11 = _mm256_fmadd_pd(x1, y1, s11);
      }
      real r00 = hsum(s00), r01 = hsum(s01), r10 = hsum(s10), r11 = hsum(s11);
      for (; p < k; ++p) {
        r00 += ai0[p] * bj0[p];
        r01 += ai0[p] * bj1[p];
        r10 += ai1[p] * bj0[p];
        r11 += ai1[p] * bj1[p];
      }
      real* c0 = c + i * n + j;
      real* c1 = c0 + n;
      if (accumulate) {
        c0[0] += r00;
        c0[1] += r01;
        c1[0] += r10;
        c1[1] += r11;
      } else {
        c0[0] = r00;
        c0[1] = r01;
        c1[0] = r10;
        c1[1] = r11;
      }
    }
    for (; j < n; ++j) {
      const real r0 = dot(k, ai0, b + j * k), r1 = dot(k, ai1, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + r0 : r0;
      c[(i + 1) * n + j] = accumulate ? c[(i + 1) * n + j] + r1 : r1;
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const real r = dot(k, a + i * k, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + r : r;
    }
  }
}

void axpy(std::size_t n, real alpha, const real* x, real* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

real sum(std::size_t n, const real* x) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
    s1 = _mm256_add_pd(s1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_add_pd(s0, _mm256_loadu_pd(x + i));
  real s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s += x[i];
  return s;
}

void affine(std::size_t n, real scale, real shift, const real* x, real* y) {
  const __m256d sv = _mm256_set1_pd(scale), tv = _mm256_set1_pd(shift);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_fmadd_pd(sv, _mm256_loadu_pd(x + i), tv));
  for (; i < n; ++i) y[i] = scale * x[i] + shift;
}

void relu_forward(std::size_t n, const real* x, real* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  // NaN passes through so divergence stays visible downstream
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(y + i, _mm256_and_pd(_mm256_cmp_pd(v, zero, _CMP_NLE_UQ), v));
  }
  for (; i < n; ++i) y[i] = x[i] <= 0.0 ? 0.0 : x[i];
}

void relu_backward(std::size_t n, const real* x, const real* dy, real* dx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void sgd_momentum(std::size_t n, real lr, real momentum, real weight_decay, real* w, const real* g,
                  real* v) {
  const __m256d lrv = _mm256_set1_pd(-lr), mv = _mm256_set1_pd(momentum),
                wdv = _mm256_set1_pd(weight_decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wi = _mm256_loadu_pd(w + i);
    const __m256d grad = _mm256_fmadd_pd(wdv, wi, _mm256_loadu_pd(g + i));
    const __m256d vi = _mm256_fmadd_pd(mv, _mm256_loadu_pd(v + i), grad);
    _mm256_storeu_pd(v + i, vi);
    _mm256_storeu_pd(w + i, _mm256_fmadd_pd(lrv, vi, wi));
  }
  for (; i < n; ++i) {
    const real grad = g[i] + weight_decay * w[i];
    v[i] = momentum * v[i] + grad;
    w[i] -= lr * v[i];
  }
}

constexpr KernelTable kAvx2{"avx2", gemm_xn<false>, gemm_nt, gemm_xn<true>, axpy, dot, sum,
                            affine, relu_forward,    relu_backward, sgd_momentum};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace meal::kernels::detail
