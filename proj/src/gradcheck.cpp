#include "invrec/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "invrec/divergence.hpp"
#include "invrec/model.hpp"
#include "invrec/trainer.hpp"

namespace invrec::gradcheck {
namespace {

using Fn = std::function<double(const std::vector<double>&)>;

std::vector<double> numeric_gradient(const Fn& f, std::vector<double> x) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + kStep;
    const double fp = f(x);
    x[i] = x0 - kStep;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * kStep);
  }
  return g;
}

void record(Report& r, std::string suite, std::string name, std::vector<double> analytic, const std::vector<double>& numeric,
            bool broken) {
  if (broken) {
    for (double& v : analytic) v *= 1.01;
  }
  r.cases.push_back({std::move(suite), std::move(name), relative_error(analytic, numeric)});
}

struct Rng : invrec::Rng {
  using invrec::Rng::Rng;
  std::size_t pick(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  Matrix matrix(std::size_t n, std::size_t d) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n * d; ++i) m.data()[i] = normal();
    return m;
  }
};

Matrix from_flat(const std::vector<double>& v, std::size_t offset, std::size_t n, std::size_t d) {
  return Matrix(n, d, std::vector<double>(v.begin() + offset, v.begin() + offset + n * d));
}

std::vector<double> flat(const Matrix& a, const Matrix& b) {
  std::vector<double> v(a.values());
  v.insert(v.end(), b.values().begin(), b.values().end());
  return v;
}

constexpr std::size_t kDims[] = {1, 2, 5};

}  // namespace

const CaseResult& Report::worst() const {
  return *std::max_element(cases.begin(), cases.end(),
                           [](const CaseResult& a, const CaseResult& b) { return a.rel_error < b.rel_error; });
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12);
}

Report loss_suite(std::uint64_t seed, bool broken) {
  Report r;
  Rng rng(seed);
  for (int c = 0; c < 20; ++c) {
    const double z = rng.uniform(-6.0, 6.0);
    const int y = c % 2;
    const Fn f = [y](const std::vector<double>& v) { return model::log_loss(model::sigmoid(v[0]), y); };
    const double analytic = model::sigmoid(z) - y;
    record(r, "loss", "logit=" + model::format_double(z) + " y=" + std::to_string(y), {analytic},
           numeric_gradient(f, {z}), broken);
  }
  return r;
}

Report mmd_suite(std::uint64_t seed, bool broken) {
  Report r;
  Rng rng(seed);
  for (int c = 0; c < 20; ++c) {
    const std::size_t d = kDims[c % 3], n = rng.pick(2, 8), m = rng.pick(2, 8);
    const Matrix a = rng.matrix(n, d), b = rng.matrix(m, d);
    const auto k = divergence::KernelSpec::fixed(divergence::robust_bandwidth(a, b));
    const Fn f = [&](const std::vector<double>& v) {
      return divergence::mmd2(from_flat(v, 0, n, d), from_flat(v, n * d, m, d), k);
    };
    const auto g = divergence::grad_mmd2(a, b, k);
    record(r, "mmd2", "d=" + std::to_string(d) + " n=" + std::to_string(n) + " m=" + std::to_string(m), flat(g.a, g.b),
           numeric_gradient(f, flat(a, b)), broken);
  }
  return r;
}

Report coral_suite(std::uint64_t seed, bool broken) {
  Report r;
  Rng rng(seed);
  for (int c = 0; c < 20; ++c) {
    const std::size_t d = kDims[c % 3], n = rng.pick(2, 8), m = rng.pick(2, 8);
    const Matrix a = rng.matrix(n, d), b = rng.matrix(m, d);
    const Fn f = [&](const std::vector<double>& v) {
      return divergence::coral(from_flat(v, 0, n, d), from_flat(v, n * d, m, d));
    };
    const auto g = divergence::grad_coral(a, b);
    record(r, "coral", "d=" + std::to_string(d) + " n=" + std::to_string(n) + " m=" + std::to_string(m), flat(g.a, g.b),
           numeric_gradient(f, flat(a, b)), broken);
  }
  return r;
}

Report model_suite(std::uint64_t seed, bool broken) {
  Report r;
  Rng rng(seed);
  for (int c = 0; c < 20; ++c) {
    const std::size_t d = rng.pick(1, 4), n = rng.pick(2, 6);
    const auto arch = c % 4 == 0 ? model::Architecture::linear(d)
                                 : model::Architecture::mlp(d, rng.pick(1, 3), rng.pick(2, 5), -1);
    model::Predictor p = model::init(arch, rng.bits());
    for (double& v : p.params) v += 0.1 * rng.normal();  // nonzero biases
    const Matrix X = rng.matrix(n, d);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.bits() & 1);
    // a fixed linear functional of the tap stands in for the penalty
    const Matrix probe = rng.matrix(n, arch.tap_dim());
    const double lambda = rng.uniform(0.0, 3.0);
    Matrix tap_grad(n, arch.tap_dim());
    for (std::size_t i = 0; i < n * arch.tap_dim(); ++i) tap_grad.data()[i] = lambda * probe.data()[i];
    const Fn f = [&](const std::vector<double>& theta) {
      const model::Predictor q{arch, theta};
      const auto pass = model::forward_batch(q, X, y);
      double pen = 0.0;
      for (std::size_t i = 0; i < n * arch.tap_dim(); ++i) pen += probe.data()[i] * pass.representation.data()[i];
      return pass.mean_loss + lambda * pen;
    };
    const std::string name = std::string(arch.kind == model::Kind::Linear ? "linear" : "mlp") + " d=" + std::to_string(d) +
                             " n=" + std::to_string(n);
    record(r, "model", name, model::backward(p, X, y, &tap_grad), numeric_gradient(f, p.params), broken);
  }
  return r;
}

Report objective_suite(std::uint64_t seed, bool broken) {
  Report r;
  Rng rng(seed);
  const trainer::PenaltyKind kinds[] = {trainer::PenaltyKind::Marginal, trainer::PenaltyKind::Conditional};
  const divergence::Kind divs[] = {divergence::Kind::Mmd, divergence::Kind::Coral};
  for (int c = 0; c < 8; ++c) {
    const std::size_t d = rng.pick(2, 4);
    const auto arch = c % 2 == 0 ? model::Architecture::linear(d) : model::Architecture::mlp(d, 2, 3, -1);
    model::Predictor p = model::init(arch, rng.bits());
    for (double& v : p.params) v += 0.1 * rng.normal();
    std::vector<trainer::EnvBatch> envs;
    for (int e = 0; e < 2 + c % 2; ++e) {
      const std::size_t n = 10;
      trainer::EnvBatch b{e, rng.matrix(n, d), std::vector<int>(n)};
      for (std::size_t i = 0; i < n; ++i) b.y[i] = static_cast<int>(i % 2);
      envs.push_back(std::move(b));
    }
    const auto kind = kinds[c % 2];
    divergence::Divergence div{divs[(c / 2) % 2], {}};
    if (div.kind == divergence::Kind::Mmd) {
      // bandwidth frozen at the base point, as in training
      Matrix pooled = model::representations(p, envs[0].X);
      for (std::size_t k = 1; k < envs.size(); ++k) pooled = vstack(pooled, model::representations(p, envs[k].X));
      div.kernel = divergence::KernelSpec::fixed(divergence::robust_bandwidth(pooled));
    }
    const double lambda = rng.uniform(0.5, 5.0);
    const Fn f = [&](const std::vector<double>& theta) {
      return trainer::objective({arch, theta}, envs, lambda, kind, div, 2);
    };
    const std::string name = std::string(arch.kind == model::Kind::Linear ? "linear" : "mlp") + " " +
                             trainer::to_string(kind) + " " + divergence::to_string(div.kind) + " K=" +
                             std::to_string(envs.size());
    record(r, "objective", name, trainer::objective_gradient(p, envs, lambda, kind, div, 2), numeric_gradient(f, p.params),
           broken);
  }
  return r;
}

Report run_all(std::uint64_t seed, bool broken) {
  Report all;
  for (auto suite : {loss_suite, mmd_suite, coral_suite, model_suite, objective_suite}) {
    const auto r = suite(derive_seed(seed, {all.cases.size()}), broken);
    all.cases.insert(all.cases.end(), r.cases.begin(), r.cases.end());
  }
  return all;
}

}  // namespace invrec::gradcheck
