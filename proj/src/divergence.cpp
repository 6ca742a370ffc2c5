#include "invrec/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "invrec/kernels.hpp"

namespace invrec::divergence {
namespace {

void require_same_dim(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("dimension mismatch: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  }
  if (a.cols() == 0) throw ShapeError("representations have dimension 0");
}

Matrix pooled_rows(const Matrix& a, const Matrix& b) {
  require_same_dim(a, b);
  return vstack(a, b);
}

// All pairwise distances (i < j) among the rows, subsampling large inputs.
std::vector<double> pair_distances(const Matrix& x) {
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), 0);
  if (idx.size() > kMedianExactRows) {
    std::mt19937_64 rng(0x6d656469616eULL);
    for (std::size_t i = 0; i < kMedianExactRows; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(kMedianExactRows);
  }
  const Matrix s = x.select_rows(idx);
  const std::size_t n = s.rows(), d = s.cols();
  std::vector<double> out;
  out.reserve(n * (n - 1) / 2);
  std::vector<double> buf(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    kernels::sq_dist_row(s.row(i).data(), s.data() + (i + 1) * d, n - i - 1, d, buf.data());
    for (std::size_t j = 0; j < n - i - 1; ++j) out.push_back(std::sqrt(buf[j]));
  }
  return out;
}

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

double resolve(const KernelSpec& k, const Matrix& a, const Matrix& b) {
  return k.is_median() ? robust_bandwidth(a, b) : k.bandwidth;
}

// Shared pass for value and gradients of the biased squared MMD.
double mmd2_impl(const Matrix& a, const Matrix& b, double sigma, Gradients* g) {
  require_same_dim(a, b);
  if (a.rows() == 0 || b.rows() == 0) throw ShapeError("mmd2 needs at least one row on each side");
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  const double gamma = 1.0 / (2.0 * sigma * sigma);
  const double inv_s2 = 1.0 / (sigma * sigma);
  std::vector<double> krow(std::max(n, m));
  std::vector<double> acc(d);
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  if (g) {
    g->a = Matrix(n, d);
    g->b = Matrix(m, d);
  }
  // rows of a against a and b
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    kernels::gaussian_row(ai, a.data(), n, d, gamma, krow.data());
    const double saa = kernels::sum(krow.data(), n);
    kaa += saa;
    if (g) {
      // sum_q K_iq (a_i - a_q) = a_i * sum K - A^T k
      kernels::gemv_t(a.data(), krow.data(), acc.data(), n, d);
      auto gi = g->a.row(i);
      for (std::size_t k = 0; k < d; ++k) gi[k] = -(2.0 / (double(n) * n)) * inv_s2 * (ai[k] * saa - acc[k]);
    }
    kernels::gaussian_row(ai, b.data(), m, d, gamma, krow.data());
    const double sab = kernels::sum(krow.data(), m);
    kab += sab;
    if (g) {
      kernels::gemv_t(b.data(), krow.data(), acc.data(), m, d);
      auto gi = g->a.row(i);
      for (std::size_t k = 0; k < d; ++k) gi[k] += (2.0 / (double(n) * m)) * inv_s2 * (ai[k] * sab - acc[k]);
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double* bj = b.row(j).data();
    kernels::gaussian_row(bj, b.data(), m, d, gamma, krow.data());
    const double sbb = kernels::sum(krow.data(), m);
    kbb += sbb;
    if (g) {
      kernels::gemv_t(b.data(), krow.data(), acc.data(), m, d);
      auto gj = g->b.row(j);
      for (std::size_t k = 0; k < d; ++k) gj[k] = -(2.0 / (double(m) * m)) * inv_s2 * (bj[k] * sbb - acc[k]);
      kernels::gaussian_row(bj, a.data(), n, d, gamma, krow.data());
      const double sba = kernels::sum(krow.data(), n);
      kernels::gemv_t(a.data(), krow.data(), acc.data(), n, d);
      for (std::size_t k = 0; k < d; ++k) gj[k] += (2.0 / (double(n) * m)) * inv_s2 * (bj[k] * sba - acc[k]);
    }
  }
  const double v = kaa / (double(n) * n) + kbb / (double(m) * m) - 2.0 * kab / (double(n) * m);
  return std::max(0.0, v);
}

Matrix centered(const Matrix& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0, x.row(i).data(), mean.data(), d);
  for (double& v : mean) v /= static_cast<double>(n);
  Matrix c = x;
  for (std::size_t i = 0; i < n; ++i) kernels::axpy(-1.0, mean.data(), c.row(i).data(), d);
  return c;
}

Matrix covariance_of_centered(const Matrix& xc) {
  const std::size_t n = xc.rows(), d = xc.cols();
  Matrix c(d, d);
  for (std::size_t i = 0; i < n; ++i) kernels::rank1(1.0, xc.row(i).data(), xc.row(i).data(), c.data(), d, d);
  const double s = 1.0 / static_cast<double>(n - 1);
  for (std::size_t k = 0; k < d * d; ++k) c.data()[k] *= s;
  return c;
}

void require_coral_rows(const Matrix& a, const Matrix& b) {
  require_same_dim(a, b);
  if (a.rows() < 2 || b.rows() < 2) throw ShapeError("coral needs at least two rows on each side");
}

}  // namespace

KernelSpec KernelSpec::fixed(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw Error("kernel bandwidth must be positive and finite");
  return {sigma};
}

double median_bandwidth(const Matrix& pooled) {
  if (pooled.rows() < 2) throw Error("median bandwidth needs at least two rows");
  auto dist = pair_distances(pooled);
  const double med = median_of(dist);
  if (med > 0.0) return med;
  if (std::all_of(dist.begin(), dist.end(), [](double v) { return v == 0.0; })) {
    throw Error("median bandwidth undefined: all rows are identical");
  }
  return med;
}

double robust_bandwidth(const Matrix& pooled) {
  if (pooled.rows() < 2) return 1.0;
  auto dist = pair_distances(pooled);
  const double med = median_of(dist);
  if (med > 0.0) return med;
  std::vector<double> nz;
  for (double v : dist) {
    if (v > 0.0) nz.push_back(v);
  }
  return nz.empty() ? 1.0 : median_of(nz);
}

double robust_bandwidth(const Matrix& a, const Matrix& b) { return robust_bandwidth(pooled_rows(a, b)); }

double mmd2(const Matrix& a, const Matrix& b, const KernelSpec& k) { return mmd2_impl(a, b, resolve(k, a, b), nullptr); }

Gradients grad_mmd2(const Matrix& a, const Matrix& b, const KernelSpec& k) {
  Gradients g;
  mmd2_impl(a, b, resolve(k, a, b), &g);
  return g;
}

Matrix covariance(const Matrix& x) {
  if (x.rows() < 2) throw ShapeError("covariance needs at least two rows");
  return covariance_of_centered(centered(x));
}

double coral(const Matrix& a, const Matrix& b) {
  require_coral_rows(a, b);
  const Matrix ca = covariance(a), cb = covariance(b);
  double s = 0.0;
  for (std::size_t k = 0; k < ca.values().size(); ++k) {
    const double t = ca.values()[k] - cb.values()[k];
    s += t * t;
  }
  const double d = static_cast<double>(a.cols());
  return s / (d * d);
}

Gradients grad_coral(const Matrix& a, const Matrix& b) {
  require_coral_rows(a, b);
  const std::size_t d = a.cols();
  const Matrix ac = centered(a), bc = centered(b);
  const Matrix ca = covariance_of_centered(ac), cb = covariance_of_centered(bc);
  Matrix diff(d, d);
  for (std::size_t k = 0; k < d * d; ++k) diff.data()[k] = ca.values()[k] - cb.values()[k];
  const double dd = static_cast<double>(d) * static_cast<double>(d);
  const double sa = 4.0 / (dd * static_cast<double>(a.rows() - 1));
  const double sb = -4.0 / (dd * static_cast<double>(b.rows() - 1));
  Gradients g{Matrix(a.rows(), d), Matrix(b.rows(), d)};
  // row i of Xc * D equals D^T x_i = D x_i (D symmetric)
  for (std::size_t i = 0; i < a.rows(); ++i) {
    kernels::gemv(diff.data(), ac.row(i).data(), nullptr, g.a.row(i).data(), d, d);
    for (double& v : g.a.row(i)) v *= sa;
  }
  for (std::size_t j = 0; j < b.rows(); ++j) {
    kernels::gemv(diff.data(), bc.row(j).data(), nullptr, g.b.row(j).data(), d, d);
    for (double& v : g.b.row(j)) v *= sb;
  }
  return g;
}

const char* to_string(Kind k) { return k == Kind::Mmd ? "mmd" : "coral"; }

Kind kind_from_string(const std::string& s) {
  if (s == "mmd") return Kind::Mmd;
  if (s == "coral") return Kind::Coral;
  throw Error("unknown divergence '" + s + "' (expected mmd or coral)");
}

Evaluation evaluate(const Divergence& div, const Matrix& a, const Matrix& b, bool with_grad) {
  Evaluation ev;
  if (div.kind == Kind::Mmd) {
    const double sigma = resolve(div.kernel, a, b);
    ev.value = mmd2_impl(a, b, sigma, with_grad ? &ev.grad : nullptr);
  } else {
    ev.value = coral(a, b);
    if (with_grad) ev.grad = grad_coral(a, b);
  }
  return ev;
}

}  // namespace invrec::divergence
