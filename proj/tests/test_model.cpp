#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "invrec/gradcheck.hpp"
#include "invrec/model.hpp"

using namespace invrec;
using namespace invrec::model;

namespace {

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

std::vector<int> random_labels(Rng& rng, std::size_t n) {
  std::vector<int> y(n);
  for (auto& v : y) v = rng.bernoulli(0.5);
  return y;
}

}  // namespace

TEST_CASE("init") {
  const auto a = init(Architecture::linear(3), 42);
  CHECK(a.params.size() == 4);
  CHECK(a.params == init(Architecture::linear(3), 42).params);
  CHECK(a.params.back() == 0.0);
  const double bound = 1.0 / std::sqrt(3.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(a.params[i]) <= bound);

  auto m = init(Architecture::mlp(2, 2, 4), 1);
  // 2->4, 4->4, 4->1
  CHECK(m.params.size() == (2 * 4 + 4) + (4 * 4 + 4) + (4 + 1));
  std::fill(m.params.begin(), m.params.end(), 0.0);
  const double x[] = {0.3, -2.0};
  CHECK(forward(m, x).probability == 0.5);
}

TEST_CASE("linear forward by hand") {
  Predictor p{Architecture::linear(2), {1.0, -1.0, 0.0}};
  const double x[] = {2.0, 1.0};
  const auto f = forward(p, x);
  CHECK(f.logit == 1.0);
  CHECK(f.probability == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK(predict_label(p, x) == 1);
  const double zero[] = {1.0, 1.0};
  CHECK(predict_label(p, zero) == 0);  // logit exactly 0
}

TEST_CASE("mlp forward by hand") {
  // 1 -> 2 -> 1 with ReLU: h = relu(W1 x + b1), z = w2 . h + b2
  Predictor p{Architecture::mlp(1, 1, 2), {1.0, -1.0, 0.5, 0.0, 2.0, 3.0, -1.0}};
  for (double x : {-2.0, -0.25, 0.0, 0.7, 3.0}) {
    const double h0 = std::max(0.0, x + 0.5), h1 = std::max(0.0, -x);
    const double z = 2.0 * h0 + 3.0 * h1 - 1.0;
    const double in[] = {x};
    const auto f = forward(p, in);
    CHECK(f.logit == doctest::Approx(z).epsilon(1e-15));
    REQUIRE(f.representation().size() == 2);
    CHECK(f.representation()[0] == doctest::Approx(h0));
    CHECK(f.representation()[1] == doctest::Approx(h1));
  }
}

TEST_CASE("log loss") {
  CHECK(log_loss(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(log_loss(0.9, 1) == doctest::Approx(-std::log(0.9)).epsilon(1e-15));
  CHECK(log_loss(1.0 - 1e-15, 1) < 1e-11);
  CHECK(std::isfinite(log_loss(0.0, 1)));
}

TEST_CASE("linear backward is the logistic gradient") {
  Rng rng(2);
  const auto X = random_matrix(rng, 9, 3);
  const auto y = random_labels(rng, 9);
  const auto p = init(Architecture::linear(3), 5);
  std::vector<double> expect(4, 0.0);
  for (std::size_t i = 0; i < 9; ++i) {
    double z = p.params[3];
    for (std::size_t j = 0; j < 3; ++j) z += p.params[j] * X(i, j);
    const double r = 1.0 / (1.0 + std::exp(-z)) - y[i];
    for (std::size_t j = 0; j < 3; ++j) expect[j] += r * X(i, j) / 9.0;
    expect[3] += r / 9.0;
  }
  const auto g = backward(p, X, y);
  for (std::size_t k = 0; k < 4; ++k) CHECK(g[k] == doctest::Approx(expect[k]).epsilon(1e-13));

  const Matrix zero_tap(9, 1, 0.0);
  CHECK(backward(p, X, y, &zero_tap) == g);
}

TEST_CASE("batched passes agree with the per-row path") {
  Rng rng(3);
  const auto X = random_matrix(rng, 7, 4);
  const auto y = random_labels(rng, 7);
  const auto p = init(Architecture::mlp(4, 2, 5), 8);
  const auto pass = forward_batch(p, X, y);
  CHECK(pass.mean_loss == doctest::Approx(mean_log_loss(p, X, y)).epsilon(1e-14));
  const auto reps = representations(p, X);
  for (std::size_t i = 0; i < reps.values().size(); ++i) CHECK(pass.representation.values()[i] == doctest::Approx(reps.values()[i]));
  const auto tap = random_matrix(rng, 7, 5);
  const auto a = backward(p, X, y, &tap), b = backward_batch(p, X, y, pass, &tap);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
}

TEST_CASE("predict_label is invariant to positive scaling of the last layer") {
  Rng rng(4);
  auto p = init(Architecture::mlp(3, 2, 6), 9);
  const auto X = random_matrix(rng, 40, 3);
  const auto before = predict_labels(p, X);
  const auto off = p.arch.layer_offset(p.arch.layer_count() - 1);
  for (std::size_t k = off; k < p.params.size(); ++k) p.params[k] *= 3.7;
  CHECK(predict_labels(p, X) == before);
}

TEST_CASE("checkpoints round-trip exactly") {
  const auto p = init(Architecture::mlp(5, 3, 7, 1), 11);
  const auto q = from_checkpoint(to_checkpoint(p));
  CHECK(q.arch == p.arch);
  CHECK(q.params == p.params);
  const auto l = init(Architecture::linear(2), 1);
  CHECK(from_checkpoint(to_checkpoint(l)).params == l.params);
  CHECK_THROWS_AS(from_checkpoint("hello"), Error);
  auto bad = to_checkpoint(l);
  bad.resize(bad.size() - 4);
  CHECK_THROWS_AS(from_checkpoint(bad), Error);
}

TEST_CASE("shape errors") {
  const auto p = init(Architecture::linear(3), 1);
  const Matrix X(2, 4, 0.0);
  CHECK_THROWS_AS(logits(p, X), ShapeError);
  Predictor broken{Architecture::linear(3), {1.0}};
  CHECK_THROWS_AS(broken.check(), ShapeError);
}

TEST_CASE("model gradients pass the finite-difference suite") {
  const auto rep = gradcheck::model_suite(1);
  CHECK(rep.passed());
  CHECK(gradcheck::loss_suite(1).passed());
  CHECK_FALSE(gradcheck::model_suite(1, true).passed());
}
