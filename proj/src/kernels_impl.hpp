#pragma once

// Per-variant kernel entry points. Only the dispatcher and the equivalence
// tests include this header.

#include <cstddef>

#define INVREC_KERNEL_DECLS                                                                              \
  double dot(const double* a, const double* b, std::size_t n);                                          \
  double sum(const double* v, std::size_t n);                                                           \
  void axpy(double alpha, const double* x, double* y, std::size_t n);                                   \
  void sq_dist_row(const double* a, const double* B, std::size_t m, std::size_t d, double* out);        \
  void exp_scaled(double* v, std::size_t n, double scale);                                              \
  void gemv(const double* W, const double* x, const double* b, double* y, std::size_t rows,             \
            std::size_t cols);                                                                          \
  void gemv_t(const double* W, const double* g, double* out, std::size_t rows, std::size_t cols);       \
  void rank1(double alpha, const double* u, const double* v, double* W, std::size_t rows, std::size_t cols);

namespace invrec::kernels::scalar {
INVREC_KERNEL_DECLS
}

#if defined(INVREC_HAS_AVX2)
namespace invrec::kernels::avx2 {
INVREC_KERNEL_DECLS
}
#endif

#undef INVREC_KERNEL_DECLS
