#include <atomic>
#include <cstdlib>
#include <string>

#include "meal/error.hpp"
#include "meal/kernels/kernels.hpp"

namespace meal::kernels {

#if !defined(MEAL_HAVE_AVX2)
namespace detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace detail
#endif

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("MEAL_KERNELS")) {
    if (auto b = parse_backend(env); b && supported(*b)) return *b;
  }
  return best_available();
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

bool supported(Backend backend) {
  switch (backend) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
      return detail::avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

Backend best_available() { return supported(Backend::avx2) ? Backend::avx2 : Backend::scalar; }

const KernelTable& table(Backend backend) {
  if (!supported(backend))
    throw ConfigError("kernel backend '" + std::string(backend_name(backend)) +
                      "' is not supported on this CPU");
  return backend == Backend::avx2 ? *detail::avx2_table() : detail::scalar_table();
}

const KernelTable& active() {
  return current().load(std::memory_order_relaxed) == Backend::avx2 ? *detail::avx2_table()
                                                                     : detail::scalar_table();
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void select(Backend backend) {
  (void)table(backend);
  current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

std::optional<Backend> parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  return std::nullopt;
}

}  // namespace meal::kernels
