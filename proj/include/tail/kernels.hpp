#pragma once

#include <cstddef>
#include <string_view>

namespace tail::kernels {

// Dense double-precision inner loops used by the lifted-system algebra and
// the neural network. Each kernel has a scalar reference implementation and
// optional SIMD variants; the active backend is picked once at startup from
// runtime CPU detection and can be overridden for equivalence testing.

enum class Backend { Scalar, Avx2, Neon };

Backend active_backend();
void set_backend(Backend b);        // falls back to Scalar if unsupported
bool backend_supported(Backend b);
std::string_view backend_name(Backend b);

// sum_i a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha*x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

// y[i] = alpha*x[i]
void scale(double alpha, const double* x, double* y, std::size_t n);

// y = M*x, M row-major (rows x cols), y length rows
void gemv(const double* m, std::size_t rows, std::size_t cols,
          const double* x, double* y);

// C = A*B, all row-major; A (n x k), B (k x m), C (n x m)
void gemm(const double* a, const double* b, double* c,
          std::size_t n, std::size_t k, std::size_t m);

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void scale_scalar(double alpha, const double* x, double* y, std::size_t n);
#ifdef TAIL_HAVE_AVX2
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void scale_avx2(double alpha, const double* x, double* y, std::size_t n);
#endif
#ifdef TAIL_HAVE_NEON
double dot_neon(const double* a, const double* b, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
void scale_neon(double alpha, const double* x, double* y, std::size_t n);
#endif
} // namespace detail

} // namespace tail::kernels
