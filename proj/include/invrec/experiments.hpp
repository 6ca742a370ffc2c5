#pragma once

// Synthetic experiment generators and orchestrations: the user-subclass
// experiment (three binary features, two subclasses), the color/label
// correlation sweep, mixed subpopulations, the invariance check on held-out
// data and the edge re-orientation check.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "invrec/dataset.hpp"
#include "invrec/model.hpp"
#include "invrec/report.hpp"
#include "invrec/scm.hpp"
#include "invrec/trainer.hpp"

namespace invrec::experiments {

// ---------------------------------------------------------------- subclass

/// Environments 0 and 1 are used for training, 2 for testing.
struct SubclassParams {
  /// P(x_sp = y) in the x_sp channel, per environment
  std::array<double, 3> q_e{0.90, 0.66, 0.50};
  double p_xac = 0.75;
  /// label marginals P(y = 1 | e), induced by selection weights
  std::array<double, 3> p_y_given_e{0.55, 0.45, 0.50};
  /// r -> x_sp mechanism: P(r = y), and the probability that x_sp copies r
  double p_r = 0.85;
  double copy_r = 0.2;
  std::size_t n_per_env = 20000;

  void check() const;
};

/// Display names for the two edge orientations.
struct SubclassLabels {
  std::string xsp_to_r = "believer";
  std::string r_to_xsp = "skeptic";

  const std::string& of(scm::GraphTag tag) const { return tag == scm::GraphTag::XspToR ? xsp_to_r : r_to_xsp; }
};

/// Variables x_sp, x_ac, r, y over environments {0, 1, 2}.
///   XspToR: x_sp = y w.p. q_e, r := x_sp.
///   RToXsp: r = y w.p. p_r; x_sp = r w.p. copy_r, else x_sp = y w.p. q_e.
scm::DiscreteScm subclass_model(const SubclassParams& params, scm::GraphTag tag);

struct SubclassData {
  scm::DiscreteScm model;
  Dataset train;  ///< environments 0 and 1
  Dataset test;   ///< environment 2
};

/// Samples n_per_env rows per environment. With user_id >= 0 a leading `u`
/// column holding that id is added.
SubclassData gen_subclass_experiment(const SubclassParams& params, scm::GraphTag tag, std::uint64_t seed,
                                     int user_id = -1);

// ------------------------------------------------------------------- sweep

struct SweepParams {
  std::vector<double> means{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<double> offsets{0.025, 0.05, 0.1};
  double test_correlation = 0.8;
  double base_accuracy = 0.75;
  std::size_t noise_dims = 2;
  std::size_t pixels = 2;
  std::size_t n_per_env = 2000;
  std::size_t n_test = 10000;

  void check() const;
  /// {m - o1, m + o1, m - o2, m + o2, ...}
  std::vector<double> env_correlations(double mean) const;
  std::size_t feature_dim() const { return 1 + noise_dims + 3 * pixels; }
};

struct Rgb {
  double r, g, b;
};

/// c = 1: (0.5 + 0.2g, 0.7g, 0.7g); c = 0: (0.7g, 0.5 + 0.2g, 0.7g).
/// Throws Error for g outside [0, 1] or c not in {0, 1}.
Rgb colorize(double gray, int c);
/// Channel-major result: all R values, then G, then B.
std::vector<double> colorize(std::span<const double> gray, int c);

/// One environment: x_g fair, y = x_g w.p. base_accuracy, c = y w.p. p_env.
/// Features: [2 x_g - 1, noise_dims N(0,1), colorize(gray pixels, c)].
struct SweepEnv {
  double correlation = 0.0;
  trainer::EnvBatch batch;
  std::vector<int> color;
  std::vector<int> gender;
};
SweepEnv gen_sweep_environment(const SweepParams& params, double p_env, std::size_t n, int env_id, std::uint64_t seed);

struct SweepCondition {
  double mean = 0.0;
  std::vector<SweepEnv> train;
  SweepEnv test;
};
std::vector<SweepCondition> gen_correlation_sweep(const SweepParams& params, std::uint64_t seed);
SweepCondition gen_sweep_condition(const SweepParams& params, double mean, std::uint64_t seed);

// ------------------------------------------------------------------ shared

/// Moves floor(alpha * n) uniformly chosen rows of each dataset into the
/// other. alpha must lie in [0, 0.5].
std::pair<Dataset, Dataset> mix_subpopulations(const Dataset& a, const Dataset& b, double alpha, std::uint64_t seed);

struct Metrics {
  std::size_t n = 0;
  double accuracy = 0.0;
  std::vector<std::pair<int, double>> per_env;
};
Metrics evaluate(const model::Predictor& p, const std::vector<trainer::EnvBatch>& data);
Metrics evaluate(const model::Predictor& p, const Dataset& data);

/// Runs fn(0..n-1) on up to `jobs` threads; results must be written by index.
/// Exceptions are rethrown (lowest index first) after all tasks finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Worker count used when a caller passes jobs <= 0.
int default_jobs();

// ----------------------------------------------------------- orchestrations

struct Table1Config {
  SubclassParams data;
  SubclassLabels labels;
  /// penalty/λ fields are overridden per cell: λ = 0 rows train without a
  /// penalty, λ > 0 rows use `penalty` with `lambda`.
  trainer::TrainConfig train;
  trainer::PenaltyKind penalty = trainer::PenaltyKind::Conditional;
  double lambda = 1.0;
  int replicates = 5;
};
Table1Config default_table1_config();
report::ExperimentReport run_table1(const Table1Config& cfg, std::uint64_t seed, int jobs = 1);

struct SweepConfig {
  SweepParams data;
  trainer::TrainConfig conditional;
  trainer::TrainConfig marginal;
  trainer::TrainConfig none;
};
SweepConfig default_sweep_config();
report::ExperimentReport run_sweep(const SweepConfig& cfg, std::uint64_t seed, int jobs = 1);

struct MixtureConfig {
  Table1Config base;
  std::vector<double> alphas{0.0, 0.1, 0.25};
};
MixtureConfig default_mixture_config();
report::ExperimentReport run_mixture(const MixtureConfig& cfg, std::uint64_t seed, int jobs = 1);

struct InvarianceCheckConfig {
  Table1Config base;
  int replicates = 10;
  std::size_t n_heldout = 2000;
  int permutations = 500;
};
InvarianceCheckConfig default_invariance_check_config();
/// Trains a conditionally penalized and an unpenalized model on the
/// x_sp -> r subclass and tests conditional invariance on fresh samples from
/// the training environments.
report::ExperimentReport run_invariance_check(const InvarianceCheckConfig& cfg, std::uint64_t seed, int jobs = 1);

/// Re-orients the r -> x_sp default model and reports the pooled total
/// variation and the posterior gaps (raw and with label priors equalized).
report::ExperimentReport run_reorientation(const SubclassParams& params, std::uint64_t seed);

// ------------------------------------------------------------ configuration

report::Json to_json(const trainer::TrainConfig& c);
void update_from_json(trainer::TrainConfig& c, const report::Json& j);
report::Json to_json(const SubclassParams& p);
void update_from_json(SubclassParams& p, const report::Json& j);
report::Json to_json(const SweepParams& p);
void update_from_json(SweepParams& p, const report::Json& j);
report::Json to_json(const Table1Config& c);
void update_from_json(Table1Config& c, const report::Json& j);
report::Json to_json(const SweepConfig& c);
void update_from_json(SweepConfig& c, const report::Json& j);
report::Json to_json(const MixtureConfig& c);
void update_from_json(MixtureConfig& c, const report::Json& j);
report::Json to_json(const InvarianceCheckConfig& c);
void update_from_json(InvarianceCheckConfig& c, const report::Json& j);

}  // namespace invrec::experiments
