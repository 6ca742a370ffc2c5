#include <cmath>

#include "invrec/experiments.hpp"

namespace invrec::experiments {

void SweepParams::check() const {
  if (means.empty()) throw Error("sweep needs at least one mean correlation");
  for (double m : means) {
    for (double p : env_correlations(m)) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error("environment correlation " + model::format_double(p) + " outside [0, 1]");
    }
  }
  if (!(test_correlation >= 0.0 && test_correlation <= 1.0)) throw Error("test correlation outside [0, 1]");
  if (!(base_accuracy >= 0.0 && base_accuracy <= 1.0)) throw Error("base accuracy outside [0, 1]");
  if (n_per_env < 2 || n_test < 1) throw Error("sweep sample sizes too small");
}

std::vector<double> SweepParams::env_correlations(double mean) const {
  std::vector<double> out;
  for (double o : offsets) {
    out.push_back(mean - o);
    out.push_back(mean + o);
  }
  if (out.empty()) out.push_back(mean);
  return out;
}

Rgb colorize(double g, int c) {
  if (!(g >= 0.0 && g <= 1.0)) throw Error("gray value " + model::format_double(g) + " outside [0, 1]");
  if (c == 1) return {0.5 + 0.2 * g, 0.7 * g, 0.7 * g};
  if (c == 0) return {0.7 * g, 0.5 + 0.2 * g, 0.7 * g};
  throw Error("color must be 0 or 1");
}

std::vector<double> colorize(std::span<const double> gray, int c) {
  const std::size_t n = gray.size();
  std::vector<double> out(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb px = colorize(gray[i], c);
    out[i] = px.r;
    out[n + i] = px.g;
    out[2 * n + i] = px.b;
  }
  return out;
}

SweepEnv gen_sweep_environment(const SweepParams& params, double p_env, std::size_t n, int env_id, std::uint64_t seed) {
  if (!(p_env >= 0.0 && p_env <= 1.0)) throw Error("environment correlation outside [0, 1]");
  SweepEnv env;
  env.correlation = p_env;
  env.batch.env = env_id;
  env.batch.X = Matrix(n, params.feature_dim());
  env.batch.y.resize(n);
  env.color.resize(n);
  env.gender.resize(n);
  Rng rng(seed);
  std::vector<double> gray(params.pixels);
  for (std::size_t i = 0; i < n; ++i) {
    const int xg = rng.bernoulli(0.5) ? 1 : 0;
    const int y = rng.bernoulli(params.base_accuracy) ? xg : 1 - xg;
    const int c = rng.bernoulli(p_env) ? y : 1 - y;
    auto row = env.batch.X.row(i);
    std::size_t k = 0;
    row[k++] = 2.0 * xg - 1.0;
    for (std::size_t j = 0; j < params.noise_dims; ++j) row[k++] = rng.normal();
    for (double& g : gray) g = rng.uniform();
    for (double v : colorize(gray, c)) row[k++] = v;
    env.batch.y[i] = y;
    env.color[i] = c;
    env.gender[i] = xg;
  }
  return env;
}

SweepCondition gen_sweep_condition(const SweepParams& params, double mean, std::uint64_t seed) {
  params.check();
  SweepCondition cond;
  cond.mean = mean;
  const auto ps = params.env_correlations(mean);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    cond.train.push_back(gen_sweep_environment(params, ps[k], params.n_per_env, static_cast<int>(k), derive_seed(seed, {k})));
  }
  cond.test = gen_sweep_environment(params, params.test_correlation, params.n_test, static_cast<int>(ps.size()),
                                    derive_seed(seed, {ps.size()}));
  return cond;
}

std::vector<SweepCondition> gen_correlation_sweep(const SweepParams& params, std::uint64_t seed) {
  params.check();
  std::vector<SweepCondition> out;
  for (std::size_t i = 0; i < params.means.size(); ++i) {
    out.push_back(gen_sweep_condition(params, params.means[i], derive_seed(seed, {i})));
  }
  return out;
}

}  // namespace invrec::experiments
