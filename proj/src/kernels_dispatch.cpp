#include <cstdlib>
#include <string>

#include "invrec/common.hpp"
#include "invrec/kernels.hpp"
#include "kernels_impl.hpp"

namespace invrec::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(INVREC_HAS_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Impl initial_impl() {
  const bool has = cpu_has_avx2();
  if (const char* env = std::getenv("INVREC_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Impl::Scalar;
    if (v == "avx2" && has) return Impl::Avx2;
  }
  return has ? Impl::Avx2 : Impl::Scalar;
}

Impl& current() {
  static Impl impl = initial_impl();
  return impl;
}

}  // namespace

bool avx2_available() {
  static const bool has = cpu_has_avx2();
  return has;
}

Impl active() { return current(); }

void set_active(Impl impl) {
  if (impl == Impl::Avx2 && !avx2_available()) throw Error("AVX2 kernels are not available on this machine");
  current() = impl;
}

const char* name(Impl impl) { return impl == Impl::Avx2 ? "avx2" : "scalar"; }

#if defined(INVREC_HAS_AVX2)
#define INVREC_DISPATCH(fn, ...) \
  return current() == Impl::Avx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define INVREC_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

double dot(const double* a, const double* b, std::size_t n) { INVREC_DISPATCH(dot, a, b, n); }
double sum(const double* v, std::size_t n) { INVREC_DISPATCH(sum, v, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { INVREC_DISPATCH(axpy, alpha, x, y, n); }
void sq_dist_row(const double* a, const double* B, std::size_t m, std::size_t d, double* out) {
  INVREC_DISPATCH(sq_dist_row, a, B, m, d, out);
}
void exp_scaled(double* v, std::size_t n, double scale) { INVREC_DISPATCH(exp_scaled, v, n, scale); }
void gemv(const double* W, const double* x, const double* b, double* y, std::size_t rows, std::size_t cols) {
  INVREC_DISPATCH(gemv, W, x, b, y, rows, cols);
}
void gemv_t(const double* W, const double* g, double* out, std::size_t rows, std::size_t cols) {
  INVREC_DISPATCH(gemv_t, W, g, out, rows, cols);
}
void rank1(double alpha, const double* u, const double* v, double* W, std::size_t rows, std::size_t cols) {
  INVREC_DISPATCH(rank1, alpha, u, v, W, rows, cols);
}

#undef INVREC_DISPATCH

}  // namespace invrec::kernels
