#include "tail/kernels.hpp"

#include <atomic>

namespace tail::kernels {

namespace {

Backend detect_backend() {
#if defined(TAIL_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::Avx2;
#endif
#ifdef TAIL_HAVE_NEON
  return Backend::Neon;  // NEON is baseline on aarch64
#endif
  return Backend::Scalar;
}

std::atomic<Backend> g_backend{detect_backend()};

} // namespace

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::Scalar: return true;
    case Backend::Avx2:
#if defined(TAIL_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon:
#ifdef TAIL_HAVE_NEON
      return true;
#else
      return false;
#endif
  }
  return false;
}

void set_backend(Backend b) {
  g_backend.store(backend_supported(b) ? b : Backend::Scalar,
                  std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

double dot(const double* a, const double* b, std::size_t n) {
  switch (active_backend()) {
#ifdef TAIL_HAVE_AVX2
    case Backend::Avx2: return detail::dot_avx2(a, b, n);
#endif
#ifdef TAIL_HAVE_NEON
    case Backend::Neon: return detail::dot_neon(a, b, n);
#endif
    default: return detail::dot_scalar(a, b, n);
  }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  switch (active_backend()) {
#ifdef TAIL_HAVE_AVX2
    case Backend::Avx2: detail::axpy_avx2(alpha, x, y, n); return;
#endif
#ifdef TAIL_HAVE_NEON
    case Backend::Neon: detail::axpy_neon(alpha, x, y, n); return;
#endif
    default: detail::axpy_scalar(alpha, x, y, n);
  }
}

void scale(double alpha, const double* x, double* y, std::size_t n) {
  switch (active_backend()) {
#ifdef TAIL_HAVE_AVX2
    case Backend::Avx2: detail::scale_avx2(alpha, x, y, n); return;
#endif
#ifdef TAIL_HAVE_NEON
    case Backend::Neon: detail::scale_neon(alpha, x, y, n); return;
#endif
    default: detail::scale_scalar(alpha, x, y, n);
  }
}

void gemv(const double* m, std::size_t rows, std::size_t cols,
          const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot(m + i * cols, x, cols);
}

void gemm(const double* a, const double* b, double* c,
          std::size_t n, std::size_t k, std::size_t m) {
  // row-major ikj loop; inner update is an axpy over a row of C
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = c + i * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      if (arow[p] != 0.0) axpy(arow[p], b + p * m, crow, m);
    }
  }
}

} // namespace tail::kernels
