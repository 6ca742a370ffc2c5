// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma
// and is only entered after the dispatcher has checked CPUID.

#include <immintrin.h>

#include <cmath>
#include <cstring>

#include "kernels_impl.hpp"

namespace invrec::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// exp(x) for x in [-708, 709]; inputs below the range return 0. Cody-Waite
// reduction to |r| <= ln2/2, degree-13 Taylor polynomial, exponent scaling by
// integer bit manipulation. Relative error is a few ulps.
inline __m256d exp4(__m256d x) {
  const __m256d lo_cut = _mm256_set1_pd(-708.0);
  const __m256d hi_cut = _mm256_set1_pd(709.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo_cut, _CMP_LT_OQ);
  x = _mm256_max_pd(_mm256_min_pd(x, hi_cut), lo_cut);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93147180369123816490e-01);
  const __m256d ln2_lo = _mm256_set1_pd(1.90821492927058770002e-10);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  static constexpr double c[] = {
      1.0 / 6227020800.0,  // 1/13!
      1.0 / 479001600.0,   // 1/12!
      1.0 / 39916800.0,    // 1/11!
      1.0 / 3628800.0,     // 1/10!
      1.0 / 362880.0,      // 1/9!
      1.0 / 40320.0,       // 1/8!
      1.0 / 5040.0,        // 1/7!
      1.0 / 720.0,         // 1/6!
      1.0 / 120.0,         // 1/5!
      1.0 / 24.0,          // 1/4!
      1.0 / 6.0,           // 1/3!
      0.5,                 // 1/2!
      1.0,                 // 1/1!
      1.0,                 // 1/0!
  };
  __m256d p = _mm256_set1_pd(c[0]);
  for (int i = 1; i < 14; ++i) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[i]));

  // 2^n: n + 1.5*2^52 puts n in the low mantissa bits.
  const __m256d magic = _mm256_set1_pd(6755399441055744.0);
  __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
  ni = _mm256_add_epi64(ni, _mm256_set1_epi64x(1023));
  const __m256d scale = _mm256_castsi256_pd(_mm256_slli_epi64(ni, 52));
  const __m256d out = _mm256_mul_pd(p, scale);
  return _mm256_andnot_pd(underflow, out);
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum(const double* v, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(v + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += v[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void sq_dist_row(const double* a, const double* B, std::size_t m, std::size_t d, double* out) {
  if (d == 1) {
    const __m256d av = _mm256_set1_pd(a[0]);
    std::size_t j = 0;
    for (; j + 4 <= m; j += 4) {
      const __m256d t = _mm256_sub_pd(av, _mm256_loadu_pd(B + j));
      _mm256_storeu_pd(out + j, _mm256_mul_pd(t, t));
    }
    for (; j < m; ++j) {
      const double t = a[0] - B[j];
      out[j] = t * t;
    }
    return;
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double* b = B + j * d;
    std::size_t k = 0;
    __m256d acc = _mm256_setzero_pd();
    for (; k + 4 <= d; k += 4) {
      const __m256d t = _mm256_sub_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k));
      acc = _mm256_fmadd_pd(t, t, acc);
    }
    double s = hsum(acc);
    for (; k < d; ++k) {
      const double t = a[k] - b[k];
      s += t * t;
    }
    out[j] = s;
  }
}

void exp_scaled(double* v, std::size_t n, double scale) {
  const __m256d s = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(v + i, exp4(_mm256_mul_pd(s, _mm256_loadu_pd(v + i))));
  if (i < n) {
    // Tail goes through the same vector path so results do not depend on position.
    alignas(32) double tmp[4] = {0.0, 0.0, 0.0, 0.0};
    std::memcpy(tmp, v + i, (n - i) * sizeof(double));
    _mm256_store_pd(tmp, exp4(_mm256_mul_pd(s, _mm256_load_pd(tmp))));
    std::memcpy(v + i, tmp, (n - i) * sizeof(double));
  }
}

void gemv(const double* W, const double* x, const double* b, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(W + r * cols, x, cols) + (b ? b[r] : 0.0);
}

void gemv_t(const double* W, const double* g, double* out, std::size_t rows, std::size_t cols) {
  std::memset(out, 0, cols * sizeof(double));
  for (std::size_t r = 0; r < rows; ++r) axpy(g[r], W + r * cols, out, cols);
}

void rank1(double alpha, const double* u, const double* v, double* W, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(alpha * u[r], v, W + r * cols, cols);
}

}  // namespace invrec::kernels::avx2
