#pragma once

// Penalized empirical risk minimization: mean log-loss on the pooled batch
// plus λ times an invariance penalty between environments, computed on the
// predictor's representation tap.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "invrec/dataset.hpp"
#include "invrec/divergence.hpp"
#include "invrec/model.hpp"

namespace invrec::trainer {

enum class PenaltyKind { None, Marginal, Conditional };
const char* to_string(PenaltyKind k);
PenaltyKind penalty_from_string(const std::string& s);

struct LambdaSchedule {
  enum class Type { Constant, TwoPhase };
  Type type = Type::Constant;
  double lambda1 = 0.0;
  int epochs1 = 1;
  double lambda2 = 0.0;

  static LambdaSchedule constant(double lambda);
  /// lambda1 for epochs [0, epochs1), lambda2 afterwards.
  static LambdaSchedule two_phase(double lambda1, int epochs1, double lambda2);
  double at(int epoch) const;
};

struct OptimizerConfig {
  enum class Kind { Sgd, Adam };
  Kind kind = Kind::Sgd;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  PenaltyKind penalty = PenaltyKind::None;
  divergence::Divergence divergence;
  LambdaSchedule lambda;
  double learning_rate = 0.01;
  int epochs = 10;
  /// Rows per step across all environments; each environment contributes
  /// batch_size / K rows.
  std::size_t batch_size = 256;
  std::size_t min_cell = 4;
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  /// input_dim is taken from the data.
  model::Architecture architecture = model::Architecture::linear(1);

  /// Throws Error describing the first violated constraint.
  void check() const;
};

/// Rows of one environment.
struct EnvBatch {
  int env = 0;
  Matrix X;
  std::vector<int> y;
};

/// Splits a discrete dataset by its `e` column (ascending) and encodes the
/// feature columns to [-1, 1].
std::vector<EnvBatch> split_by_environment(const Dataset& data, bool include_user = false);

struct SkipReport {
  std::size_t skipped = 0;
  std::vector<std::string> cells;  ///< first few skipped cells, for logs
};

struct PenaltyResult {
  double value = 0.0;
  /// d value / d representation, one matrix per environment (rows match the
  /// environment's batch). Empty when not requested.
  std::vector<Matrix> tap_grad;
};

/// Penalty over representations grouped by environment. Marginal:
/// sum_k D(Φ_k, Φ_-k). Conditional: sum_y sum_k D(Φ_k^y, Φ_-k^y), skipping
/// cells with fewer than min_cell rows on either side. A median-policy MMD
/// kernel gets one bandwidth from all rows pooled.
PenaltyResult penalty_from_representations(const std::vector<Matrix>& reps, const std::vector<std::vector<int>>& labels,
                                           PenaltyKind kind, const divergence::Divergence& div, std::size_t min_cell,
                                           bool with_grad, SkipReport* skips = nullptr);

PenaltyResult penalty_value(const model::Predictor& p, const std::vector<EnvBatch>& batches, PenaltyKind kind,
                            const divergence::Divergence& div, std::size_t min_cell = 4, bool with_grad = true,
                            SkipReport* skips = nullptr);

/// Mean log-loss over all rows pooled plus lambda * penalty. lambda = 0
/// returns the loss without evaluating the penalty.
double objective(const model::Predictor& p, const std::vector<EnvBatch>& batches, double lambda, PenaltyKind kind,
                 const divergence::Divergence& div, std::size_t min_cell = 4);

/// Gradient of objective() over θ.
std::vector<double> objective_gradient(const model::Predictor& p, const std::vector<EnvBatch>& batches, double lambda,
                                       PenaltyKind kind, const divergence::Divergence& div, std::size_t min_cell = 4);

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> penalty;
  std::vector<double> lambda;

  void write_csv(std::ostream& out) const;
  bool operator==(const TrainHistory&) const = default;
};

struct TrainResult {
  model::Predictor predictor;
  TrainHistory history;
  SkipReport skips;
};

/// Environment-balanced mini-batch training. Deterministic given config.seed.
/// Throws Error on an empty environment or a non-finite objective.
TrainResult train(const TrainConfig& config, const std::vector<EnvBatch>& envs);
TrainResult train(const TrainConfig& config, const Dataset& data);

struct InvarianceTest {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline constexpr std::uint64_t kVerifySeed = 0x76657269667955ULL;

/// Permutation test of equal score distributions across environments
/// (within label strata for Conditional), using squared MMD on the logits
/// with a median-heuristic bandwidth. Throws Error with fewer than two
/// environments. PenaltyKind::None is rejected.
InvarianceTest verify_invariance(const model::Predictor& p, const std::vector<EnvBatch>& heldout, PenaltyKind mode,
                                 int n_permutations = 1000, std::uint64_t seed = kVerifySeed);
InvarianceTest verify_invariance(const model::Predictor& p, const Dataset& heldout, PenaltyKind mode,
                                 int n_permutations = 1000, std::uint64_t seed = kVerifySeed);
/// Same test on precomputed scores.
InvarianceTest permutation_test(const std::vector<double>& scores, const std::vector<int>& env,
                                const std::vector<int>& label, PenaltyKind mode, int n_permutations, std::uint64_t seed);

}  // namespace invrec::trainer
