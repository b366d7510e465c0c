#pragma once

// Data-parallel inner loops used by every layer and optimizer.
//
// Each kernel has a scalar reference implementation and an AVX2+FMA variant.
// The variant is chosen once at runtime (CPU detection, overridable through
// the MEAL_KERNELS environment variable or select()). The two backends agree
// up to floating-point reassociation; tests/kernels_test.cpp holds them to it.

#include <cstddef>
#include <optional>
#include <string_view>

#include "meal/tensor.hpp"

namespace meal::kernels {

enum class Backend { scalar, avx2 };

struct KernelTable {
  const char* name;

  // C[M,N] = (accumulate ? C : 0) + A[M,K] * B[K,N]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b,
                  real* c, bool accumulate);
  // C[M,N] = (accumulate ? C : 0) + A[M,K] * B[N,K]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b,
                  real* c, bool accumulate);
  // C[M,N] = (accumulate ? C : 0) + A[K,M]^T * B[K,N]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const real* a, const real* b,
                  real* c, bool accumulate);

  // y += alpha * x
  void (*axpy)(std::size_t n, real alpha, const real* x, real* y);
  real (*dot)(std::size_t n, const real* x, const real* y);
  real (*sum)(std::size_t n, const real* x);
  // y = scale * x + shift
  void (*affine)(std::size_t n, real scale, real shift, const real* x, real* y);

  void (*relu_forward)(std::size_t n, const real* x, real* y);
  // dx = x > 0 ? dy : 0
  void (*relu_backward)(std::size_t n, const real* x, const real* dy, real* dx);

  // Momentum SGD with coupled weight decay:
  //   g' = g + wd * w;  v = momentum * v + g';  w -= lr * v
  void (*sgd_momentum)(std::size_t n, real lr, real momentum, real weight_decay, real* w,
                       const real* g, real* v);
};

[[nodiscard]] const KernelTable& table(Backend backend);
[[nodiscard]] bool supported(Backend backend);
[[nodiscard]] Backend best_available();

/// Kernels in use by the process.
[[nodiscard]] const KernelTable& active();
[[nodiscard]] Backend active_backend();

/// Switches the process-wide backend. Throws ConfigError when the CPU lacks it.
void select(Backend backend);

[[nodiscard]] std::string_view backend_name(Backend backend);
[[nodiscard]] std::optional<Backend> parse_backend(std::string_view name);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace meal::kernels
