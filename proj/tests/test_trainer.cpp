#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "invrec/experiments.hpp"
#include "invrec/gradcheck.hpp"
#include "invrec/trainer.hpp"

using namespace invrec;
using namespace invrec::trainer;

namespace {

EnvBatch random_env(Rng& rng, int env, std::size_t n, std::size_t d, double shift = 0.0) {
  EnvBatch b{env, Matrix(n, d), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    b.y[i] = rng.bernoulli(0.5);
    for (std::size_t j = 0; j < d; ++j) b.X(i, j) = rng.normal() + shift + 0.8 * b.y[i];
  }
  return b;
}

double mmd2_1d(const std::vector<double>& a, const std::vector<double>& b, double sigma) {
  auto k = [&](double s, double t) { return std::exp(-(s - t) * (s - t) / (2 * sigma * sigma)); };
  double aa = 0, bb = 0, ab = 0;
  for (double s : a)
    for (double t : a) aa += k(s, t);
  for (double s : b)
    for (double t : b) bb += k(s, t);
  for (double s : a)
    for (double t : b) ab += k(s, t);
  const double na = a.size(), nb = b.size();
  return aa / (na * na) + bb / (nb * nb) - 2 * ab / (na * nb);
}

std::vector<double> scores(const model::Predictor& p, const EnvBatch& b, int label = -1) {
  std::vector<double> out;
  const auto z = model::logits(p, b.X);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (label < 0 || b.y[i] == label) out.push_back(z[i]);
  }
  return out;
}

const divergence::Divergence kMmd1{divergence::Kind::Mmd, divergence::KernelSpec::fixed(1.0)};

}  // namespace

TEST_CASE("penalty conventions") {
  Rng rng(1);
  const auto p = model::init(model::Architecture::linear(2), 3);
  const std::vector<EnvBatch> one{random_env(rng, 0, 10, 2)};
  const auto r = penalty_value(p, one, PenaltyKind::Marginal, kMmd1);
  CHECK(r.value == 0.0);
  REQUIRE(r.tap_grad.size() == 1);
  for (double g : r.tap_grad[0].values()) CHECK(g == 0.0);

  const auto e = random_env(rng, 0, 12, 2);
  auto f = e;
  f.env = 1;
  for (auto kind : {PenaltyKind::Marginal, PenaltyKind::Conditional}) {
    CHECK(std::abs(penalty_value(p, {e, f}, kind, kMmd1).value) <= 1e-12);
    CHECK(std::abs(penalty_value(p, {e, f}, kind, {divergence::Kind::Coral, {}}).value) <= 1e-12);
  }
}

TEST_CASE("penalty on the logit tap matches a hand double sum") {
  Rng rng(2);
  const auto p = model::init(model::Architecture::linear(2), 4);
  const std::vector<EnvBatch> envs{random_env(rng, 0, 9, 2), random_env(rng, 1, 11, 2, 0.5)};
  const auto a = scores(p, envs[0]), b = scores(p, envs[1]);
  // two environments: D(0 vs rest) + D(1 vs rest) = 2 D(0, 1)
  CHECK(penalty_value(p, envs, PenaltyKind::Marginal, kMmd1).value ==
        doctest::Approx(2 * mmd2_1d(a, b, 1.0)).epsilon(1e-12));
  double cond = 0;
  for (int y = 0; y < 2; ++y) cond += 2 * mmd2_1d(scores(p, envs[0], y), scores(p, envs[1], y), 1.0);
  CHECK(penalty_value(p, envs, PenaltyKind::Conditional, kMmd1, 1).value == doctest::Approx(cond).epsilon(1e-12));
}

TEST_CASE("objective decomposition") {
  Rng rng(3);
  const auto p = model::init(model::Architecture::mlp(3, 2, 4), 5);
  const std::vector<EnvBatch> envs{random_env(rng, 0, 15, 3), random_env(rng, 1, 13, 3, 1.0), random_env(rng, 2, 9, 3, -1.0)};
  Matrix all = envs[0].X;
  std::vector<int> y = envs[0].y;
  for (std::size_t k = 1; k < envs.size(); ++k) {
    all = vstack(all, envs[k].X);
    y.insert(y.end(), envs[k].y.begin(), envs[k].y.end());
  }
  const double loss = model::mean_log_loss(p, all, y);
  CHECK(objective(p, envs, 0.0, PenaltyKind::Conditional, kMmd1) == loss);
  const double pen = penalty_value(p, envs, PenaltyKind::Conditional, kMmd1, 4, false).value;
  CHECK(objective(p, envs, 2.5, PenaltyKind::Conditional, kMmd1) == doctest::Approx(loss + 2.5 * pen).epsilon(1e-13));
  auto f = envs[0];
  f.env = 1;
  CHECK(objective(p, {envs[0], f}, 1.0, PenaltyKind::Marginal, kMmd1) ==
        doctest::Approx(model::mean_log_loss(p, vstack(envs[0].X, f.X), [&] {
          auto yy = envs[0].y;
          yy.insert(yy.end(), f.y.begin(), f.y.end());
          return yy;
        }())).epsilon(1e-12));
}

TEST_CASE("objective and penalty gradients pass the finite-difference suites") {
  CHECK(gradcheck::objective_suite(3).passed());
  CHECK(gradcheck::mmd_suite(3).passed());
  CHECK(gradcheck::coral_suite(3).passed());
  const auto all = gradcheck::run_all(3);
  CHECK(all.passed());
  CHECK(all.worst().rel_error == gradcheck::run_all(3).worst().rel_error);
  CHECK_FALSE(gradcheck::run_all(3, true).passed());
}

TEST_CASE("undersized conditional cells are skipped and reported") {
  Rng rng(4);
  auto a = random_env(rng, 0, 10, 2), b = random_env(rng, 1, 10, 2);
  for (auto& v : b.y) v = 0;
  b.y[0] = 1;  // a single y = 1 row in environment 1
  SkipReport skips;
  const auto p = model::init(model::Architecture::linear(2), 1);
  const auto r = penalty_value(p, {a, b}, PenaltyKind::Conditional, {divergence::Kind::Coral, {}}, 4, true, &skips);
  CHECK(skips.skipped >= 1);
  CHECK(std::isfinite(r.value));
}

TEST_CASE("lambda zero ignores the penalty and reproduces plain ERM") {
  Rng rng(5);
  const std::vector<EnvBatch> envs{random_env(rng, 0, 50, 3), random_env(rng, 1, 40, 3, 0.7)};
  TrainConfig cfg;
  cfg.architecture = model::Architecture::linear(3);
  cfg.epochs = 3;
  cfg.batch_size = 20;
  cfg.seed = 77;
  cfg.learning_rate = 0.1;
  TrainConfig pen = cfg;
  pen.penalty = PenaltyKind::Conditional;
  pen.lambda = LambdaSchedule::constant(0.0);
  const auto a = train(cfg, envs), b = train(pen, envs);
  CHECK(a.predictor.params == b.predictor.params);
  for (double v : b.history.penalty) CHECK(v == 0.0);

  // single environment: hand-rolled SGD over the same shuffled order
  const std::vector<EnvBatch> pooled{envs[0]};
  const auto res = train(cfg, pooled);
  auto p = model::init(model::Architecture::linear(3), derive_seed(cfg.seed, {1}));
  std::mt19937_64 rng2(derive_seed(cfg.seed, {2}));
  std::vector<std::size_t> order(50);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = 0;
  auto reshuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng2() % i]);
    cursor = 0;
  };
  for (int ep = 0; ep < cfg.epochs; ++ep) {
    reshuffle();
    for (int s = 0; s < 3; ++s) {  // ceil(50 / 20)
      std::vector<std::size_t> idx;
      std::vector<int> y;
      for (int i = 0; i < 20; ++i) {
        if (cursor == order.size()) reshuffle();
        idx.push_back(order[cursor++]);
        y.push_back(envs[0].y[idx.back()]);
      }
      const auto g = model::backward(p, envs[0].X.select_rows(idx), y);
      for (std::size_t k = 0; k < g.size(); ++k) p.params[k] -= cfg.learning_rate * g[k];
    }
  }
  for (std::size_t k = 0; k < p.params.size(); ++k) CHECK(res.predictor.params[k] == doctest::Approx(p.params[k]).epsilon(1e-12));
}

TEST_CASE("training is deterministic") {
  Rng rng(6);
  const std::vector<EnvBatch> envs{random_env(rng, 0, 60, 2), random_env(rng, 1, 60, 2, 1.0)};
  TrainConfig cfg;
  cfg.architecture = model::Architecture::mlp(2, 2, 8);
  cfg.penalty = PenaltyKind::Conditional;
  cfg.lambda = LambdaSchedule::constant(1.0);
  cfg.divergence = {divergence::Kind::Mmd, divergence::KernelSpec::median()};
  cfg.optimizer.kind = OptimizerConfig::Kind::Adam;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.seed = 9;
  const auto a = train(cfg, envs), b = train(cfg, envs);
  CHECK(a.history == b.history);
  CHECK(a.predictor.params == b.predictor.params);
  std::ostringstream os;
  a.history.write_csv(os);
  CHECK(os.str().rfind("epoch,loss,penalty,lambda", 0) == 0);
}

TEST_CASE("a conditional penalty lowers the conditional discrepancy it targets") {
  experiments::SubclassParams params;
  params.n_per_env = 4000;
  const auto data = experiments::gen_subclass_experiment(params, scm::GraphTag::XspToR, 21);
  const auto envs = split_by_environment(data.train);
  TrainConfig cfg;
  cfg.architecture = model::Architecture::linear(3);
  cfg.penalty = PenaltyKind::Conditional;
  cfg.divergence = {divergence::Kind::Mmd, divergence::KernelSpec::fixed(1.0)};
  cfg.optimizer.kind = OptimizerConfig::Kind::Adam;
  cfg.learning_rate = 0.02;
  cfg.epochs = 15;
  cfg.batch_size = 400;
  cfg.seed = 3;
  cfg.lambda = LambdaSchedule::constant(0.0);
  const auto plain = train(cfg, envs);
  cfg.lambda = LambdaSchedule::constant(10.0);
  const auto penalized = train(cfg, envs);
  const double before = penalty_value(plain.predictor, envs, PenaltyKind::Conditional, cfg.divergence).value;
  const double after = penalty_value(penalized.predictor, envs, PenaltyKind::Conditional, cfg.divergence).value;
  CAPTURE(before);
  CAPTURE(after);
  CHECK(after < 0.5 * before);
}

TEST_CASE("invariance test") {
  experiments::SubclassParams params;
  params.n_per_env = 1000;
  const auto data = experiments::gen_subclass_experiment(params, scm::GraphTag::XspToR, 5);
  const auto held = split_by_environment(data.train);
  model::Predictor flat{model::Architecture::linear(3), {0, 0, 0, 0.3}};
  const auto t = verify_invariance(flat, held, PenaltyKind::Marginal, 200);
  CHECK(t.statistic == 0.0);
  CHECK(t.p_value == 1.0);
  model::Predictor spurious{model::Architecture::linear(3), {1, 0, 0, 0}};
  CHECK(verify_invariance(spurious, held, PenaltyKind::Marginal, 200).p_value < 0.01);
  CHECK(verify_invariance(spurious, held, PenaltyKind::Conditional, 200).p_value < 0.01);
  CHECK_THROWS_AS(verify_invariance(flat, held, PenaltyKind::None), Error);
  CHECK_THROWS_AS(verify_invariance(flat, {held[0]}, PenaltyKind::Marginal), Error);
}

TEST_CASE("permutation p-values are valid under the null") {
  Rng rng(12);
  int small = 0;
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<double> s;
    std::vector<int> e, y;
    for (int i = 0; i < 120; ++i) {
      y.push_back(rng.bernoulli(0.5));
      e.push_back(i % 2);
      s.push_back(rng.normal() + y.back());
    }
    const auto t = permutation_test(s, e, y, PenaltyKind::Conditional, 99, rng.bits());
    CHECK(t.p_value >= 1.0 / 100.0);
    CHECK(t.p_value <= 1.0);
    small += t.p_value <= 0.05;
  }
  CHECK(small <= 8);
}

TEST_CASE("configuration checks and names") {
  TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.check(), Error);
  c = TrainConfig{};
  c.lambda = LambdaSchedule::constant(-1.0);
  CHECK_THROWS_AS(c.check(), Error);
  const auto s = LambdaSchedule::two_phase(10.0, 3, 1.0);
  CHECK(s.at(0) == 10.0);
  CHECK(s.at(2) == 10.0);
  CHECK(s.at(3) == 1.0);
  CHECK(penalty_from_string("conditional") == PenaltyKind::Conditional);
  CHECK(std::string(to_string(PenaltyKind::Marginal)) == "marginal");
  CHECK_THROWS_AS(penalty_from_string("both"), Error);
}

TEST_CASE("datasets split by environment") {
  Dataset d({{"u", 2}, {"x_a", 2}, {"r", 3}, {"y", 2}, {"e", 3}});
  const int rows[][5] = {{1, 0, 2, 1, 2}, {0, 1, 0, 0, 0}, {1, 1, 1, 1, 2}};
  for (const auto& r : rows) d.append_row(r);
  const auto s = split_by_environment(d);
  REQUIRE(s.size() == 2);
  CHECK(s[0].env == 0);
  CHECK(s[1].env == 2);
  CHECK(s[1].X.rows() == 2);
  CHECK(s[1].X.cols() == 2);
  CHECK(s[1].X(0, 0) == -1.0);
  CHECK(s[1].X(0, 1) == 1.0);  // r = 2 of arity 3
  CHECK(s[1].X(1, 1) == 0.0);
  CHECK(split_by_environment(d, true)[0].X.cols() == 3);
}
