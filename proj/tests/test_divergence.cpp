#include <doctest.h>

#include <cmath>
#include <vector>

#include "invrec/divergence.hpp"
#include "invrec/gradcheck.hpp"

using namespace invrec;
using namespace invrec::divergence;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Direct triple double sum with k(s, t) = exp(-|s - t|^2 / (2 sigma^2)).
double mmd2_oracle(const Matrix& a, const Matrix& b, double sigma) {
  auto k = [&](std::span<const double> s, std::span<const double> t) {
    double d = 0;
    for (std::size_t i = 0; i < s.size(); ++i) d += (s[i] - t[i]) * (s[i] - t[i]);
    return std::exp(-d / (2 * sigma * sigma));
  };
  double aa = 0, bb = 0, ab = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.rows(); ++j) aa += k(a.row(i), a.row(j));
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) bb += k(b.row(i), b.row(j));
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) ab += k(a.row(i), b.row(j));
  const double na = a.rows(), nb = b.rows();
  return aa / (na * na) + bb / (nb * nb) - 2 * ab / (na * nb);
}

// Covariances by the textbook formula.
double coral_oracle(const Matrix& a, const Matrix& b) {
  const std::size_t d = a.cols();
  auto cov = [&](const Matrix& x) {
    std::vector<double> mean(d, 0.0), c(d * d, 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += x(i, j) / x.rows();
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < d; ++q) c[p * d + q] += (x(i, p) - mean[p]) * (x(i, q) - mean[q]) / (x.rows() - 1.0);
    return c;
  };
  const auto ca = cov(a), cb = cov(b);
  double s = 0;
  for (std::size_t i = 0; i < d * d; ++i) s += (ca[i] - cb[i]) * (ca[i] - cb[i]);
  return s / static_cast<double>(d * d);
}

Matrix col(std::initializer_list<double> v) {
  Matrix m(v.size(), 1);
  std::size_t i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("median bandwidth") {
  CHECK(median_bandwidth(col({0, 1, 2})) == 1.0);
  CHECK(median_bandwidth(col({3, 3, 5})) > 0.0);
  CHECK_THROWS_AS(median_bandwidth(col({1})), Error);
  CHECK_THROWS_AS(median_bandwidth(col({2, 2, 2})), Error);
  CHECK(robust_bandwidth(col({2, 2, 2})) == 1.0);
  // three of the six distances are zero, the median of the nonzero ones is used
  // six of ten distances are zero, so the plain median is zero
  CHECK(robust_bandwidth(col({0, 0, 0, 0, 4})) == 4.0);
  CHECK(robust_bandwidth(col({0, 0, 0, 4})) == 2.0);
}

TEST_CASE("mmd2 against the double-sum oracle") {
  const auto k1 = KernelSpec::fixed(1.0);
  CHECK(mmd2(col({0}), col({1}), k1) == doctest::Approx(2 - 2 * std::exp(-0.5)).epsilon(1e-14));
  CHECK(mmd2(col({0, 0}), col({0, 1}), k1) == doctest::Approx(mmd2_oracle(col({0, 0}), col({0, 1}), 1.0)).epsilon(1e-14));
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto a = random_matrix(rng, 5 + t, 3), b = random_matrix(rng, 7, 3);
    CHECK(mmd2(a, b, KernelSpec::fixed(0.7)) == doctest::Approx(mmd2_oracle(a, b, 0.7)).epsilon(1e-12));
    CHECK(mmd2(a, b, KernelSpec::median()) ==
          doctest::Approx(mmd2_oracle(a, b, median_bandwidth(vstack(a, b)))).epsilon(1e-12));
  }
}

TEST_CASE("coral against the covariance oracle") {
  // a = {0, sqrt 2} has variance 1, b = {c, c + eps} has variance eps^2 / 2
  const double eps = 0.3;
  const Matrix a = col({0, std::sqrt(2.0)});
  const Matrix b = col({5, 5 + eps});
  CHECK(coral(a, b) == doctest::Approx(std::pow(1 - eps * eps / 2, 2)).epsilon(1e-14));
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto x = random_matrix(rng, 6 + t, 4), y = random_matrix(rng, 9, 4);
    CHECK(coral(x, y) == doctest::Approx(coral_oracle(x, y)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(coral(col({1}), col({1, 2})), Error);
}

TEST_CASE("identities") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto a = random_matrix(rng, 8, 3);
    Matrix shifted = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < 3; ++j) shifted(i, j) += 1.5 * (j + 1);
    CHECK(std::abs(mmd2(a, a, KernelSpec::median())) <= 1e-12);
    CHECK(std::abs(coral(a, a)) <= 1e-12);
    CHECK(std::abs(coral(a, shifted)) <= 1e-12);
  }
}

TEST_CASE("gradients vanish at a = b and for a flat kernel") {
  Rng rng(6);
  const auto a = random_matrix(rng, 4, 2);
  for (const auto& g : {grad_mmd2(a, a, KernelSpec::fixed(1.0)), grad_coral(a, a)}) {
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(g.a(i, j)) <= 1e-14);
        CHECK(std::abs(g.b(i, j)) <= 1e-14);
      }
  }
  const auto b = random_matrix(rng, 4, 2);
  const auto flat = grad_mmd2(a, b, KernelSpec::fixed(1e6));
  for (double v : flat.a.values()) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("coral gradients are translation invariant") {
  Rng rng(8);
  const auto a = random_matrix(rng, 3, 2), b = random_matrix(rng, 5, 2);
  Matrix as = a, bs = b;
  for (std::size_t i = 0; i < 3; ++i) as(i, 0) += 2.0, as(i, 1) -= 1.0;
  for (std::size_t i = 0; i < 5; ++i) bs(i, 0) += 2.0, bs(i, 1) -= 1.0;
  CHECK(coral(as, bs) == doctest::Approx(coral(a, b)).epsilon(1e-12));
  const auto g = grad_coral(a, b), gs = grad_coral(as, bs);
  for (std::size_t i = 0; i < g.a.values().size(); ++i) CHECK(std::abs(g.a.values()[i] - gs.a.values()[i]) <= 1e-12);
  for (std::size_t i = 0; i < g.b.values().size(); ++i) CHECK(std::abs(g.b.values()[i] - gs.b.values()[i]) <= 1e-12);
}

TEST_CASE("small random cases against central differences") {
  Rng rng(9);
  auto fd = [](auto f, Matrix x, std::size_t i, std::size_t j) {
    const double h = 1e-5;
    x(i, j) += h;
    const double up = f(x);
    x(i, j) -= 2 * h;
    return (up - f(x)) / (2 * h);
  };
  const auto a = random_matrix(rng, 2, 2), b = random_matrix(rng, 2, 2);
  const auto k = KernelSpec::fixed(0.9);
  const auto g = grad_mmd2(a, b, k);
  std::vector<double> an, num;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      an.push_back(g.a(i, j));
      num.push_back(fd([&](const Matrix& x) { return mmd2(x, b, k); }, a, i, j));
      an.push_back(g.b(i, j));
      num.push_back(fd([&](const Matrix& x) { return mmd2(a, x, k); }, b, i, j));
    }
  }
  CHECK(gradcheck::relative_error(an, num) < 1e-5);

  const auto c = random_matrix(rng, 3, 2), d = random_matrix(rng, 3, 2);
  const auto gc = grad_coral(c, d);
  an.clear();
  num.clear();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      an.push_back(gc.a(i, j));
      num.push_back(fd([&](const Matrix& x) { return coral(x, d); }, c, i, j));
      an.push_back(gc.b(i, j));
      num.push_back(fd([&](const Matrix& x) { return coral(c, x); }, d, i, j));
    }
  }
  CHECK(gradcheck::relative_error(an, num) < 1e-5);
}

TEST_CASE("large inputs use a deterministic subsampled median") {
  Rng rng(10);
  const auto big = random_matrix(rng, kMedianExactRows + 500, 2);
  const double m1 = median_bandwidth(big);
  CHECK(m1 == median_bandwidth(big));
  CHECK(m1 > 0.5);
  CHECK(m1 < 5.0);
}

TEST_CASE("divergence names") {
  CHECK(kind_from_string("mmd") == Kind::Mmd);
  CHECK(kind_from_string("coral") == Kind::Coral);
  CHECK_THROWS_AS(kind_from_string("kl"), Error);
  CHECK_THROWS_AS(KernelSpec::fixed(-1.0), Error);
}
