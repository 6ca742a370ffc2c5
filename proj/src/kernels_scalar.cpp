#include <cmath>

#include "kernels_impl.hpp"

namespace invrec::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void sq_dist_row(const double* a, const double* B, std::size_t m, std::size_t d, double* out) {
  for (std::size_t j = 0; j < m; ++j) {
    const double* b = B + j * d;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double t = a[k] - b[k];
      s += t * t;
    }
    out[j] = s;
  }
}

void exp_scaled(double* v, std::size_t n, double scale) {
  for (std::size_t i = 0; i < n; ++i) v[i] = std::exp(scale * v[i]);
}

void gemv(const double* W, const double* x, const double* b, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot(W + r * cols, x, cols) + (b ? b[r] : 0.0);
  }
}

void gemv_t(const double* W, const double* g, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t c = 0; c < cols; ++c) out[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) axpy(g[r], W + r * cols, out, cols);
}

void rank1(double alpha, const double* u, const double* v, double* W, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(alpha * u[r], v, W + r * cols, cols);
}

}  // namespace invrec::kernels::scalar
