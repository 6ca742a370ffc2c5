#pragma once

// Data-parallel inner loops shared by the divergence estimators and the
// predictors. Every kernel has a scalar reference implementation and, on
// x86-64, an AVX2+FMA variant. The variant is chosen once at startup from
// CPUID and can be forced with INVREC_SIMD=scalar|avx2 or set_active().
//
// Results of the two variants agree to a few ulps (summation order and FMA
// contraction differ); within one variant every call is deterministic.

#include <cstddef>

namespace invrec::kernels {

enum class Impl { Scalar, Avx2 };

bool avx2_available();
Impl active();
/// Throws invrec::Error if the requested variant is not available.
void set_active(Impl impl);
const char* name(Impl impl);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* v, std::size_t n);
/// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
/// out[j] = ||a - B[j]||^2 for the m rows of the row-major m x d matrix B.
void sq_dist_row(const double* a, const double* B, std::size_t m, std::size_t d, double* out);
/// v[i] = exp(scale * v[i])
void exp_scaled(double* v, std::size_t n, double scale);
/// y = W x + b with W row-major (rows x cols); b may be null.
void gemv(const double* W, const double* x, const double* b, double* y, std::size_t rows, std::size_t cols);
/// out = W^T g, out has `cols` entries and is overwritten.
void gemv_t(const double* W, const double* g, double* out, std::size_t rows, std::size_t cols);
/// W += alpha * u v^T
void rank1(double alpha, const double* u, const double* v, double* W, std::size_t rows, std::size_t cols);

/// out[j] = exp(-gamma * ||a - B[j]||^2)
inline void gaussian_row(const double* a, const double* B, std::size_t m, std::size_t d, double gamma,
                         double* out) {
  sq_dist_row(a, B, m, d, out);
  exp_scaled(out, m, -gamma);
}

}  // namespace invrec::kernels
