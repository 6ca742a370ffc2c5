#include "invrec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "invrec/kernels.hpp"

namespace invrec::trainer {

const char* to_string(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::None: return "none";
    case PenaltyKind::Marginal: return "marginal";
    case PenaltyKind::Conditional: return "conditional";
  }
  return "none";
}

PenaltyKind penalty_from_string(const std::string& s) {
  if (s == "none") return PenaltyKind::None;
  if (s == "marginal") return PenaltyKind::Marginal;
  if (s == "conditional") return PenaltyKind::Conditional;
  throw Error("unknown penalty '" + s + "' (expected none, marginal or conditional)");
}

LambdaSchedule LambdaSchedule::constant(double lambda) {
  LambdaSchedule s;
  s.lambda1 = s.lambda2 = lambda;
  return s;
}

LambdaSchedule LambdaSchedule::two_phase(double lambda1, int epochs1, double lambda2) {
  LambdaSchedule s;
  s.type = Type::TwoPhase;
  s.lambda1 = lambda1;
  s.epochs1 = epochs1;
  s.lambda2 = lambda2;
  return s;
}

double LambdaSchedule::at(int epoch) const {
  if (type == Type::Constant) return lambda1;
  return epoch < epochs1 ? lambda1 : lambda2;
}

void TrainConfig::check() const {
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (epochs < 0) throw Error("epochs must be nonnegative");
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (penalty != PenaltyKind::None && batch_size < 2) throw Error("penalized training needs batch size >= 2");
  if (!(lambda.lambda1 >= 0.0) || !(lambda.lambda2 >= 0.0)) throw Error("lambda must be nonnegative");
  if (lambda.type == LambdaSchedule::Type::TwoPhase && lambda.epochs1 < 1) throw Error("two-phase schedule needs epochs1 >= 1");
  if (optimizer.kind == OptimizerConfig::Kind::Adam &&
      !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0 && optimizer.eps > 0.0)) {
    throw Error("invalid Adam settings");
  }
}

std::vector<EnvBatch> split_by_environment(const Dataset& data, bool include_user) {
  const auto cols = feature_columns(data, include_user);
  if (cols.empty()) throw Error("dataset has no feature columns");
  const Matrix X = encode_features(data, cols);
  const auto y = labels(data);
  const std::size_t ce = data.col("e");
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < data.rows(); ++r) rows[data.at(r, ce)].push_back(r);
  std::vector<EnvBatch> out;
  for (const auto& [e, idx] : rows) {
    EnvBatch b{e, X.select_rows(idx), {}};
    for (std::size_t i : idx) b.y.push_back(y[i]);
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

struct Cell {
  std::size_t env;
  std::vector<std::size_t> rows;  // indices into that environment's batch
};

void note_skip(SkipReport* skips, const std::string& what) {
  if (!skips) return;
  ++skips->skipped;
  if (skips->cells.size() < 16) skips->cells.push_back(what);
}

// D(A, B) where A is one group of rows and B pools the rest; gradients are
// scattered back to the environments the rows came from.
void accumulate_pair(const std::vector<Matrix>& reps, const std::vector<Cell>& a_side, const std::vector<Cell>& b_side,
                     const divergence::Divergence& div, bool with_grad, PenaltyResult& out) {
  const std::size_t d = reps.front().cols();
  auto gather = [&](const std::vector<Cell>& cells) {
    Matrix m;
    std::size_t n = 0;
    for (const auto& c : cells) n += c.rows.size();
    m = Matrix(n, d);
    std::size_t r = 0;
    for (const auto& c : cells) {
      for (std::size_t i : c.rows) {
        std::copy(reps[c.env].row(i).begin(), reps[c.env].row(i).end(), m.row(r).begin());
        ++r;
      }
    }
    return m;
  };
  const Matrix A = gather(a_side), B = gather(b_side);
  const auto ev = divergence::evaluate(div, A, B, with_grad);
  out.value += ev.value;
  if (!with_grad) return;
  auto scatter = [&](const std::vector<Cell>& cells, const Matrix& g) {
    std::size_t r = 0;
    for (const auto& c : cells) {
      for (std::size_t i : c.rows) {
        kernels::axpy(1.0, g.row(r).data(), out.tap_grad[c.env].row(i).data(), d);
        ++r;
      }
    }
  };
  scatter(a_side, ev.grad.a);
  scatter(b_side, ev.grad.b);
}

}  // namespace

PenaltyResult penalty_from_representations(const std::vector<Matrix>& reps, const std::vector<std::vector<int>>& labels,
                                           PenaltyKind kind, const divergence::Divergence& div, std::size_t min_cell,
                                           bool with_grad, SkipReport* skips) {
  PenaltyResult out;
  const std::size_t K = reps.size();
  if (with_grad) {
    for (const auto& r : reps) out.tap_grad.emplace_back(r.rows(), r.cols());
  }
  if (kind == PenaltyKind::None || K < 2) return out;
  if (kind == PenaltyKind::Conditional && labels.size() != K) throw Error("conditional penalty needs labels for every environment");
  const std::size_t d = reps.front().cols();
  for (const auto& r : reps) {
    if (r.cols() != d) throw ShapeError("representations differ in width across environments");
  }
  divergence::Divergence resolved = div;
  if (div.kind == divergence::Kind::Mmd && div.kernel.is_median()) {
    Matrix pooled = reps.front();
    for (std::size_t k = 1; k < K; ++k) pooled = vstack(pooled, reps[k]);
    resolved.kernel = divergence::KernelSpec::fixed(divergence::robust_bandwidth(pooled));
  }
  const std::size_t need = std::max<std::size_t>(min_cell, div.kind == divergence::Kind::Coral ? 2 : 1);

  std::vector<int> strata{-1};
  if (kind == PenaltyKind::Conditional) {
    strata.clear();
    for (const auto& l : labels) {
      for (int y : l) {
        if (std::find(strata.begin(), strata.end(), y) == strata.end()) strata.push_back(y);
      }
    }
    std::sort(strata.begin(), strata.end());
  }
  for (int y : strata) {
    std::vector<Cell> cells(K);
    for (std::size_t k = 0; k < K; ++k) {
      cells[k].env = k;
      for (std::size_t i = 0; i < reps[k].rows(); ++i) {
        if (y < 0 || labels[k][i] == y) cells[k].rows.push_back(i);
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<Cell> rest;
      std::size_t n_rest = 0;
      for (std::size_t j = 0; j < K; ++j) {
        if (j != k && !cells[j].rows.empty()) {
          rest.push_back(cells[j]);
          n_rest += cells[j].rows.size();
        }
      }
      if (cells[k].rows.size() < need || n_rest < need) {
        note_skip(skips, "env#" + std::to_string(k) + (y >= 0 ? " y=" + std::to_string(y) : "") + ": " +
                             std::to_string(cells[k].rows.size()) + " vs " + std::to_string(n_rest) + " rows");
        continue;
      }
      accumulate_pair(reps, {cells[k]}, rest, resolved, with_grad, out);
    }
  }
  return out;
}

PenaltyResult penalty_value(const model::Predictor& p, const std::vector<EnvBatch>& batches, PenaltyKind kind,
                            const divergence::Divergence& div, std::size_t min_cell, bool with_grad, SkipReport* skips) {
  if (batches.empty()) throw Error("penalty needs at least one environment");
  std::vector<Matrix> reps;
  std::vector<std::vector<int>> labs;
  for (const auto& b : batches) {
    reps.push_back(model::representations(p, b.X));
    labs.push_back(b.y);
    if (kind == PenaltyKind::Conditional && b.y.size() != b.X.rows()) throw Error("conditional penalty needs labels");
  }
  return penalty_from_representations(reps, labs, kind, div, min_cell, with_grad, skips);
}

namespace {

struct Pooled {
  Matrix X;
  std::vector<int> y;
  std::vector<std::size_t> offsets;  // start row of each environment, plus end
};

Pooled pool(const std::vector<EnvBatch>& batches) {
  Pooled p;
  std::size_t n = 0;
  const std::size_t d = batches.empty() ? 0 : batches.front().X.cols();
  for (const auto& b : batches) n += b.X.rows();
  p.X = Matrix(n, d);
  std::size_t r = 0;
  for (const auto& b : batches) {
    if (b.X.cols() != d) throw ShapeError("environments differ in feature width");
    if (b.y.size() != b.X.rows()) throw ShapeError("label count does not match rows");
    p.offsets.push_back(r);
    std::copy(b.X.values().begin(), b.X.values().end(), p.X.data() + r * d);
    p.y.insert(p.y.end(), b.y.begin(), b.y.end());
    r += b.X.rows();
  }
  p.offsets.push_back(r);
  return p;
}

struct StepEval {
  double loss = 0.0;
  double penalty = 0.0;
  std::vector<double> grad;
};

StepEval evaluate_step(const model::Predictor& p, const Pooled& batch, double lambda, PenaltyKind kind,
                       const divergence::Divergence& div, std::size_t min_cell, bool with_grad, SkipReport* skips) {
  StepEval out;
  const auto pass = model::forward_batch(p, batch.X, batch.y);
  out.loss = pass.mean_loss;
  Matrix tap_grad;
  const bool penalize = kind != PenaltyKind::None && lambda != 0.0;
  if (penalize) {
    const std::size_t K = batch.offsets.size() - 1;
    std::vector<Matrix> reps;
    std::vector<std::vector<int>> labs;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<std::size_t> idx(batch.offsets[k + 1] - batch.offsets[k]);
      std::iota(idx.begin(), idx.end(), batch.offsets[k]);
      reps.push_back(pass.representation.select_rows(idx));
      labs.emplace_back(batch.y.begin() + batch.offsets[k], batch.y.begin() + batch.offsets[k + 1]);
    }
    const auto pen = penalty_from_representations(reps, labs, kind, div, min_cell, with_grad, skips);
    out.penalty = pen.value;
    if (with_grad) {
      tap_grad = Matrix(batch.X.rows(), pass.representation.cols());
      for (std::size_t k = 0; k < K; ++k) {
        const Matrix& g = pen.tap_grad[k];
        for (std::size_t i = 0; i < g.rows(); ++i) {
          auto dst = tap_grad.row(batch.offsets[k] + i);
          for (std::size_t j = 0; j < g.cols(); ++j) dst[j] = lambda * g(i, j);
        }
      }
    }
  }
  if (with_grad) out.grad = model::backward_batch(p, batch.X, batch.y, pass, penalize ? &tap_grad : nullptr);
  return out;
}

}  // namespace

double objective(const model::Predictor& p, const std::vector<EnvBatch>& batches, double lambda, PenaltyKind kind,
                 const divergence::Divergence& div, std::size_t min_cell) {
  const auto ev = evaluate_step(p, pool(batches), lambda, kind, div, min_cell, false, nullptr);
  if (kind == PenaltyKind::None || lambda == 0.0) return ev.loss;
  return ev.loss + lambda * ev.penalty;
}

std::vector<double> objective_gradient(const model::Predictor& p, const std::vector<EnvBatch>& batches, double lambda,
                                       PenaltyKind kind, const divergence::Divergence& div, std::size_t min_cell) {
  return evaluate_step(p, pool(batches), lambda, kind, div, min_cell, true, nullptr).grad;
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,loss,penalty,lambda\n";
  for (std::size_t i = 0; i < loss.size(); ++i) {
    out << i << ',' << model::format_double(loss[i]) << ',' << model::format_double(penalty[i]) << ','
        << model::format_double(lambda[i]) << '\n';
  }
}

TrainResult train(const TrainConfig& config, const std::vector<EnvBatch>& envs) {
  config.check();
  if (envs.empty()) throw Error("no training environments");
  for (const auto& e : envs) {
    if (e.X.rows() == 0) throw Error("environment " + std::to_string(e.env) + " has no rows");
    if (e.y.size() != e.X.rows()) throw ShapeError("environment " + std::to_string(e.env) + " has mismatched labels");
  }
  const std::size_t K = envs.size();
  model::Architecture arch = config.architecture;
  arch.input_dim = envs.front().X.cols();
  TrainResult res;
  res.predictor = model::init(arch, derive_seed(config.seed, {1}));
  auto& theta = res.predictor.params;

  std::mt19937_64 rng(derive_seed(config.seed, {2}));
  const std::size_t per_env = std::max<std::size_t>(1, config.batch_size / K);
  std::size_t largest = 0;
  for (const auto& e : envs) largest = std::max(largest, e.X.rows());
  const std::size_t steps = (largest + per_env - 1) / per_env;

  std::vector<std::vector<std::size_t>> order(K);
  std::vector<std::size_t> cursor(K, 0);
  for (std::size_t k = 0; k < K; ++k) {
    order[k].resize(envs[k].X.rows());
    std::iota(order[k].begin(), order[k].end(), 0);
  }
  auto reshuffle = [&](std::size_t k) {
    auto& o = order[k];
    for (std::size_t i = o.size(); i > 1; --i) std::swap(o[i - 1], o[rng() % i]);
    cursor[k] = 0;
  };

  std::vector<double> m1, m2;
  if (config.optimizer.kind == OptimizerConfig::Kind::Adam) {
    m1.assign(theta.size(), 0.0);
    m2.assign(theta.size(), 0.0);
  }
  std::uint64_t t = 0;
  const std::size_t d = arch.input_dim;
  Pooled batch;
  batch.X = Matrix(per_env * K, d);
  batch.y.resize(per_env * K);
  for (std::size_t k = 0; k <= K; ++k) batch.offsets.push_back(k * per_env);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda = config.lambda.at(epoch);
    for (std::size_t k = 0; k < K; ++k) reshuffle(k);
    double loss_sum = 0.0, pen_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < per_env; ++i) {
          if (cursor[k] == order[k].size()) reshuffle(k);
          const std::size_t src = order[k][cursor[k]++];
          const std::size_t dst = k * per_env + i;
          std::copy(envs[k].X.row(src).begin(), envs[k].X.row(src).end(), batch.X.row(dst).begin());
          batch.y[dst] = envs[k].y[src];
        }
      }
      const auto ev = evaluate_step(res.predictor, batch, lambda, config.penalty, config.divergence, config.min_cell, true,
                                    &res.skips);
      const double obj = ev.loss + (lambda != 0.0 ? lambda * ev.penalty : 0.0);
      if (!std::isfinite(obj)) {
        throw Error("non-finite objective at epoch " + std::to_string(epoch) + " step " + std::to_string(s) +
                    " (loss " + model::format_double(ev.loss) + ", penalty " + model::format_double(ev.penalty) + ")");
      }
      loss_sum += ev.loss;
      pen_sum += lambda != 0.0 ? ev.penalty : 0.0;
      if (config.optimizer.kind == OptimizerConfig::Kind::Sgd) {
        kernels::axpy(-config.learning_rate, ev.grad.data(), theta.data(), theta.size());
      } else {
        ++t;
        const auto& o = config.optimizer;
        const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m1[i] = o.beta1 * m1[i] + (1.0 - o.beta1) * ev.grad[i];
          m2[i] = o.beta2 * m2[i] + (1.0 - o.beta2) * ev.grad[i] * ev.grad[i];
          theta[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + o.eps);
        }
      }
    }
    res.history.loss.push_back(loss_sum / static_cast<double>(steps));
    res.history.penalty.push_back(pen_sum / static_cast<double>(steps));
    res.history.lambda.push_back(lambda);
  }
  return res;
}

TrainResult train(const TrainConfig& config, const Dataset& data) { return train(config, split_by_environment(data)); }

InvarianceTest permutation_test(const std::vector<double>& scores_in, const std::vector<int>& env_in,
                                const std::vector<int>& label_in, PenaltyKind mode, int n_permutations, std::uint64_t seed) {
  if (mode == PenaltyKind::None) throw Error("invariance test needs the marginal or conditional mode");
  if (scores_in.size() != env_in.size() || (mode == PenaltyKind::Conditional && label_in.size() != scores_in.size())) {
    throw ShapeError("scores, environments and labels differ in length");
  }
  std::vector<int> envs(env_in);
  std::sort(envs.begin(), envs.end());
  envs.erase(std::unique(envs.begin(), envs.end()), envs.end());
  if (envs.size() < 2) throw Error("invariance test needs at least two environments");

  std::mt19937_64 rng(seed);
  // keep the support small enough for a dense kernel matrix
  std::vector<std::size_t> keep(scores_in.size());
  std::iota(keep.begin(), keep.end(), 0);
  {
    std::vector<double> u(scores_in);
    std::sort(u.begin(), u.end());
    const std::size_t distinct = std::unique(u.begin(), u.end()) - u.begin();
    constexpr std::size_t kMaxSupport = 600;
    if (distinct > kMaxSupport) {
      for (std::size_t i = keep.size(); i > 1; --i) std::swap(keep[i - 1], keep[rng() % i]);
      keep.resize(kMaxSupport);
      std::sort(keep.begin(), keep.end());
    }
  }
  std::vector<double> support;
  for (std::size_t i : keep) support.push_back(scores_in[i]);
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  const std::size_t U = support.size();
  const std::size_t K = envs.size();

  std::vector<std::size_t> val(keep.size());
  std::vector<std::size_t> env(keep.size());
  std::vector<int> stratum(keep.size(), 0);
  for (std::size_t n = 0; n < keep.size(); ++n) {
    const std::size_t i = keep[n];
    val[n] = std::lower_bound(support.begin(), support.end(), scores_in[i]) - support.begin();
    env[n] = std::lower_bound(envs.begin(), envs.end(), env_in[i]) - envs.begin();
    if (mode == PenaltyKind::Conditional) stratum[n] = label_in[i];
  }

  // median pairwise distance over all row pairs, from value multiplicities
  std::vector<double> count(U, 0.0);
  for (std::size_t v : val) count[v] += 1.0;
  std::vector<std::pair<double, double>> pairs;  // (distance, number of row pairs)
  double zero_pairs = 0.0;
  for (std::size_t i = 0; i < U; ++i) {
    zero_pairs += count[i] * (count[i] - 1.0) / 2.0;
    for (std::size_t j = i + 1; j < U; ++j) pairs.emplace_back(support[j] - support[i], count[i] * count[j]);
  }
  std::sort(pairs.begin(), pairs.end());
  auto weighted_median = [&](double zeros) {
    double total = zeros;
    for (const auto& pr : pairs) total += pr.second;
    if (total <= 0.0) return 0.0;
    auto nth = [&](double rank) {  // 0-based rank among sorted pair distances
      double acc = zeros;
      if (rank < acc) return 0.0;
      for (const auto& pr : pairs) {
        acc += pr.second;
        if (rank < acc) return pr.first;
      }
      return pairs.empty() ? 0.0 : pairs.back().first;
    };
    const double mid = std::floor(total / 2.0);
    if (std::fmod(total, 2.0) == 1.0) return nth(mid);
    return 0.5 * (nth(mid - 1.0) + nth(mid));
  };
  double sigma = weighted_median(zero_pairs);
  if (!(sigma > 0.0)) sigma = weighted_median(0.0);
  if (!(sigma > 0.0)) sigma = 1.0;

  Matrix kmat(U, U);
  for (std::size_t i = 0; i < U; ++i) {
    for (std::size_t j = 0; j < U; ++j) {
      const double t = support[i] - support[j];
      kmat(i, j) = std::exp(-t * t / (2.0 * sigma * sigma));
    }
  }

  std::vector<int> strata_ids(stratum);
  std::sort(strata_ids.begin(), strata_ids.end());
  strata_ids.erase(std::unique(strata_ids.begin(), strata_ids.end()), strata_ids.end());

  auto statistic = [&](const std::vector<std::size_t>& env_of) {
    double total = 0.0;
    std::vector<double> c(K * U), diff(U);
    for (int s : strata_ids) {
      std::fill(c.begin(), c.end(), 0.0);
      std::vector<double> n_env(K, 0.0);
      double n_all = 0.0;
      for (std::size_t n = 0; n < val.size(); ++n) {
        if (stratum[n] != s) continue;
        c[env_of[n] * U + val[n]] += 1.0;
        n_env[env_of[n]] += 1.0;
        n_all += 1.0;
      }
      for (std::size_t k = 0; k < K; ++k) {
        const double na = n_env[k], nb = n_all - n_env[k];
        if (na == 0.0 || nb == 0.0) continue;
        for (std::size_t u = 0; u < U; ++u) {
          double cu_all = 0.0;
          for (std::size_t j = 0; j < K; ++j) cu_all += c[j * U + u];
          diff[u] = c[k * U + u] / na - (cu_all - c[k * U + u]) / nb;
        }
        double v = 0.0;
        for (std::size_t u = 0; u < U; ++u) {
          if (diff[u] != 0.0) v += diff[u] * kernels::dot(kmat.row(u).data(), diff.data(), U);
        }
        total += std::max(0.0, v);
      }
    }
    return total;
  };

  InvarianceTest res;
  res.statistic = statistic(env);
  // shuffle environment labels within each stratum
  std::vector<std::vector<std::size_t>> members(strata_ids.size());
  for (std::size_t n = 0; n < val.size(); ++n) {
    members[std::lower_bound(strata_ids.begin(), strata_ids.end(), stratum[n]) - strata_ids.begin()].push_back(n);
  }
  std::vector<std::size_t> perm_env(env);
  int exceed = 0;
  const double tol = 1e-12 * std::max(1.0, res.statistic);
  for (int b = 0; b < n_permutations; ++b) {
    for (const auto& m : members) {
      for (std::size_t i = m.size(); i > 1; --i) std::swap(perm_env[m[i - 1]], perm_env[m[rng() % i]]);
    }
    exceed += statistic(perm_env) >= res.statistic - tol;
  }
  res.p_value = (1.0 + exceed) / (1.0 + n_permutations);
  return res;
}

InvarianceTest verify_invariance(const model::Predictor& p, const std::vector<EnvBatch>& heldout, PenaltyKind mode,
                                 int n_permutations, std::uint64_t seed) {
  std::vector<double> scores;
  std::vector<int> env, label;
  for (const auto& b : heldout) {
    const auto z = model::logits(p, b.X);
    scores.insert(scores.end(), z.begin(), z.end());
    env.insert(env.end(), z.size(), b.env);
    label.insert(label.end(), b.y.begin(), b.y.end());
  }
  return permutation_test(scores, env, label, mode, n_permutations, seed);
}

InvarianceTest verify_invariance(const model::Predictor& p, const Dataset& heldout, PenaltyKind mode, int n_permutations,
                                 std::uint64_t seed) {
  return verify_invariance(p, split_by_environment(heldout), mode, n_permutations, seed);
}

}  // namespace invrec::trainer
