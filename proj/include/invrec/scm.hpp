#pragma once

// Exact discrete structural causal models indexed by an environment
// variable. Models here are small (a handful of variables, a few values
// each), so every query is answered by enumerating the full joint table.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "invrec/common.hpp"
#include "invrec/dataset.hpp"

namespace invrec::scm {

/// Orientation of the edge between the spurious item feature and the
/// platform-selected information.
enum class GraphTag { XspToR, RToXsp, None };
enum class ClassTag { Causal, AntiCausal };

const char* to_string(GraphTag t);
const char* to_string(ClassTag t);
GraphTag graph_tag_from_string(std::string_view s);
ClassTag class_tag_from_string(std::string_view s);

struct Variable {
  std::string id;
  int arity = 2;
};

/// Conditional probability table p(child | parents), optionally one table per
/// environment value. Rows are indexed by the parent assignment in mixed radix
/// (first parent most significant); each row holds arity(child) entries.
struct FactorTable {
  std::size_t child = 0;
  std::vector<std::size_t> parents;
  bool per_environment = false;
  std::vector<std::vector<double>> tables;

  const std::vector<double>& table(int env) const { return per_environment ? tables.at(env) : tables.at(0); }
};

/// Reweighting of the joint by a nonnegative weight w(label value, e).
struct SelectionSpec {
  std::size_t label = 0;
  /// weights[e][label value]
  std::vector<std::vector<double>> weights;
};

struct DiscreteScm {
  std::vector<Variable> variables;
  Variable environment{"e", 2};
  std::vector<FactorTable> factors;
  std::optional<SelectionSpec> selection;
  GraphTag graph_tag = GraphTag::None;
  ClassTag class_tag = ClassTag::AntiCausal;

  /// Throws Error when the id is not a model variable.
  std::size_t index_of(std::string_view id) const;
  int env_count() const { return environment.arity; }
  const FactorTable* factor_for(std::size_t child) const;
};

class DegenerateSelectionError : public Error {
 public:
  using Error::Error;
};

/// Violations of the model invariants, one human-readable line each. Empty iff
/// the model is acyclic, every variable has exactly one well-shaped factor,
/// every row is a probability vector (within 1e-12), environment-indexed
/// factors cover every environment and selection weights are usable.
std::vector<std::string> validate(const DiscreteScm& scm);
/// Throws ValidationError listing all violations.
void require_valid(const DiscreteScm& scm);

/// Dense probability table over the full outcome space of `variables`, in
/// mixed radix with the first variable most significant.
struct JointTable {
  std::vector<Variable> variables;
  std::vector<double> probabilities;

  std::size_t index_of(std::string_view id) const;
  std::size_t size() const { return probabilities.size(); }
  /// Decodes a flat index into one value per variable.
  std::vector<int> assignment(std::size_t flat) const;
  std::size_t flat_index(std::span<const int> values) const;
};

using Assignment = std::vector<std::pair<std::string, int>>;

/// Exact joint over the model variables (environment excluded) at `env`:
/// product of factors, then selection reweighting and renormalization.
JointTable joint_distribution(const DiscreteScm& scm, int env);

/// Joint over the model variables plus the environment (appended last) with
/// P(v, e) = env_weights[e] * P^e(v). Weights are normalized; zero weight
/// drops the environment.
JointTable joint_with_environment(const DiscreteScm& scm, std::span<const double> env_weights);

/// Mixture of per-environment joints with the given weights, environment
/// marginalized out (the pooled observational distribution).
JointTable pooled_joint(const DiscreteScm& scm, std::span<const double> env_weights);

JointTable marginalize(const JointTable& joint, std::span<const std::string> keep);

/// p(target | given). Throws Error on a zero-probability conditioning event.
std::vector<double> conditional(const JointTable& joint, std::string_view target, const Assignment& given);

/// I(a; b | given) in nats.
double conditional_mutual_information(const JointTable& joint, std::string_view a, std::string_view b,
                                      std::span<const std::string> given);

/// Total variation distance 0.5 * sum |p - q|; tables must share variables.
double total_variation(const JointTable& p, const JointTable& q);

/// Exact Bayes classifier for `label` from `features`: argmax_y p(y | features),
/// ties broken toward the larger label value (y = 1 for binary labels).
struct BayesClassifier {
  std::string label;
  std::vector<Variable> features;
  /// prediction per feature assignment (mixed radix over `features`)
  std::vector<int> rule;
  double accuracy = 0.0;

  int predict(std::span<const int> feature_values) const;
};

BayesClassifier bayes_optimal(const JointTable& joint, std::string_view label, std::span<const std::string> features);
/// Exact accuracy of an existing classifier under another joint.
double accuracy_under(const BayesClassifier& clf, const JointTable& joint);

/// n i.i.d. samples from joint_distribution(scm, env). Columns are the model
/// variables followed by the environment column. Deterministic given seed.
Dataset sample(const DiscreteScm& scm, int env, std::size_t n, std::uint64_t seed);

/// Result of building an observationally equivalent model with the
/// x_sp -> r orientation from a source with r independent of e given y.
struct ReorientationResult {
  DiscreteScm model;
  /// false when every balance equation had a single feasible point, so no
  /// environment dependence could be introduced.
  bool environment_dependence_induced = false;
  /// per label value: identity solution, chosen solution and feasible length
  struct Cell {
    int y = 0;
    double identity[2] = {0, 0};
    double chosen[2] = {0, 0};
    double feasible_length = 0.0;
  };
  std::vector<Cell> cells;
};

class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// Given a valid source over binary {x_sp, x_ac, r, y} with environments
/// `train_envs` (exactly two, pooled with equal weight), builds a model that
/// factorizes as p(x_ac|y) p(r|y,x_sp) p^e(x_sp|y) p^e(y) and has the same
/// pooled observational joint. p(r|y,x_sp) is the source's pooled conditional;
/// p^e(x_sp=1|y) solve sum_e p~(e,y) p^e = sum_e p~(e,y) D^e_src(x_sp=1|y).
/// Along the segment the solution moves from the identity toward the farther
/// endpoint by `step` times that distance (step = 1 is the endpoint).
/// Environments outside `train_envs` keep the source's x_sp and label
/// marginals.
inline constexpr double kReorientStep = 0.5;
ReorientationResult reorient_spurious_edge(const DiscreteScm& source, std::span<const int> train_envs,
                                           double step = kReorientStep);

/// reorient_spurious_edge with training environments {0, 1}: turns an
/// r -> x_sp (skeptic) source into an x_sp -> r (believer) model.
ReorientationResult construct_believer_from_skeptic(const DiscreteScm& source);

/// max over (r, x_ac) cells and environment pairs of |D^e(y=1|r,x_ac) - D^e'(y=1|r,x_ac)|.
double max_posterior_gap(const DiscreteScm& scm, std::span<const int> envs, bool equalize_label_prior);

}  // namespace invrec::scm
