#include "invrec/scm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace invrec::scm {

const char* to_string(GraphTag t) {
  switch (t) {
    case GraphTag::XspToR: return "XspToR";
    case GraphTag::RToXsp: return "RToXsp";
    case GraphTag::None: return "None";
  }
  return "None";
}

const char* to_string(ClassTag t) { return t == ClassTag::Causal ? "Causal" : "AntiCausal"; }

GraphTag graph_tag_from_string(std::string_view s) {
  if (s == "XspToR") return GraphTag::XspToR;
  if (s == "RToXsp") return GraphTag::RToXsp;
  if (s == "None") return GraphTag::None;
  throw Error("unknown graph tag '" + std::string(s) + "'");
}

ClassTag class_tag_from_string(std::string_view s) {
  if (s == "Causal") return ClassTag::Causal;
  if (s == "AntiCausal") return ClassTag::AntiCausal;
  throw Error("unknown class tag '" + std::string(s) + "'");
}

std::size_t DiscreteScm::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].id == id) return i;
  }
  throw Error("model has no variable '" + std::string(id) + "'");
}

const FactorTable* DiscreteScm::factor_for(std::size_t child) const {
  for (const auto& f : factors) {
    if (f.child == child) return &f;
  }
  return nullptr;
}

namespace {

std::size_t parent_rows(const DiscreteScm& scm, const FactorTable& f) {
  std::size_t rows = 1;
  for (std::size_t p : f.parents) rows *= static_cast<std::size_t>(scm.variables[p].arity);
  return rows;
}

std::string describe_row(const DiscreteScm& scm, const FactorTable& f, std::size_t row) {
  if (f.parents.empty()) return "(root)";
  std::vector<int> vals(f.parents.size());
  for (std::size_t k = f.parents.size(); k-- > 0;) {
    const int a = scm.variables[f.parents[k]].arity;
    vals[k] = static_cast<int>(row % a);
    row /= a;
  }
  std::ostringstream os;
  os << '(';
  for (std::size_t k = 0; k < f.parents.size(); ++k) {
    os << (k ? "," : "") << scm.variables[f.parents[k]].id << '=' << vals[k];
  }
  os << ')';
  return os.str();
}

// Returns one cycle as a list of variable ids, or empty when acyclic.
std::vector<std::string> find_cycle(const DiscreteScm& scm) {
  const std::size_t n = scm.variables.size();
  std::vector<std::vector<std::size_t>> parents(n);
  for (const auto& f : scm.factors) {
    if (f.child < n) {
      for (std::size_t p : f.parents) {
        if (p < n) parents[f.child].push_back(p);
      }
    }
  }
  std::vector<int> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::size_t> stack;
  std::vector<std::string> cycle;
  auto dfs = [&](auto&& self, std::size_t v) -> bool {
    state[v] = 1;
    stack.push_back(v);
    for (std::size_t p : parents[v]) {
      if (state[p] == 1) {
        auto it = std::find(stack.begin(), stack.end(), p);
        for (; it != stack.end(); ++it) cycle.push_back(scm.variables[*it].id);
        cycle.push_back(scm.variables[p].id);
        return true;
      }
      if (state[p] == 0 && self(self, p)) return true;
    }
    stack.pop_back();
    state[v] = 2;
    return false;
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (state[v] == 0 && dfs(dfs, v)) {
      // parents-walk order: reverse so arrows read parent -> child
      std::reverse(cycle.begin(), cycle.end());
      return cycle;
    }
  }
  return {};
}

}  // namespace

std::vector<std::string> validate(const DiscreteScm& scm) {
  std::vector<std::string> out;
  const std::size_t n = scm.variables.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (scm.variables[i].arity < 2) out.push_back("variable '" + scm.variables[i].id + "' has arity < 2");
    for (std::size_t j = 0; j < i; ++j) {
      if (scm.variables[j].id == scm.variables[i].id) out.push_back("duplicate variable id '" + scm.variables[i].id + "'");
    }
    if (scm.variables[i].id == scm.environment.id) {
      out.push_back("variable '" + scm.variables[i].id + "' clashes with the environment variable");
    }
  }
  if (scm.environment.arity < 1) out.push_back("environment variable has no values");

  std::vector<int> factor_count(n, 0);
  bool shapes_ok = true;
  for (const auto& f : scm.factors) {
    if (f.child >= n) {
      out.push_back("factor refers to unknown child index " + std::to_string(f.child));
      shapes_ok = false;
      continue;
    }
    const auto& child = scm.variables[f.child];
    ++factor_count[f.child];
    bool parents_ok = true;
    for (std::size_t p : f.parents) {
      if (p >= n) {
        out.push_back("factor '" + child.id + "' refers to unknown parent index " + std::to_string(p));
        parents_ok = false;
      } else if (p == f.child) {
        out.push_back("factor '" + child.id + "' lists itself as a parent (cycle: " + child.id + " -> " + child.id + ")");
      }
    }
    if (!parents_ok || child.arity < 2) {
      shapes_ok = false;
      continue;
    }
    const std::size_t want_tables = f.per_environment ? static_cast<std::size_t>(std::max(scm.environment.arity, 0)) : 1;
    if (f.tables.size() != want_tables) {
      out.push_back("factor '" + child.id + "' has " + std::to_string(f.tables.size()) + " tables, expected " +
                    std::to_string(want_tables) + (f.per_environment ? " (one per environment)" : ""));
      shapes_ok = false;
      continue;
    }
    const std::size_t rows = parent_rows(scm, f);
    for (std::size_t t = 0; t < f.tables.size(); ++t) {
      const auto& tab = f.tables[t];
      const std::string env_note = f.per_environment ? " [e=" + std::to_string(t) + "]" : "";
      if (tab.size() != rows * child.arity) {
        out.push_back("factor '" + child.id + "'" + env_note + " has " + std::to_string(tab.size()) + " entries, expected " +
                      std::to_string(rows * child.arity));
        shapes_ok = false;
        continue;
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        bool range_ok = true;
        for (int v = 0; v < child.arity; ++v) {
          const double p = tab[r * child.arity + v];
          if (!(p >= 0.0 && p <= 1.0)) range_ok = false;
          s += p;
        }
        if (!range_ok) {
          out.push_back("factor '" + child.id + "' row " + describe_row(scm, f, r) + env_note + " has an entry outside [0, 1]");
        }
        if (!(std::abs(s - 1.0) <= 1e-12)) {
          std::ostringstream os;
          os.precision(12);
          os << "factor '" << child.id << "' row " << describe_row(scm, f, r) << env_note << " sums to " << s;
          out.push_back(os.str());
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (factor_count[i] == 0) out.push_back("variable '" + scm.variables[i].id + "' has no factor");
    if (factor_count[i] > 1) out.push_back("variable '" + scm.variables[i].id + "' has " + std::to_string(factor_count[i]) + " factors");
  }
  if (shapes_ok) {
    const auto cycle = find_cycle(scm);
    if (!cycle.empty()) {
      std::string s = "cycle: ";
      for (std::size_t i = 0; i < cycle.size(); ++i) s += (i ? " -> " : "") + cycle[i];
      out.push_back(s);
    }
  }
  if (scm.selection) {
    const auto& sel = *scm.selection;
    if (sel.label >= n) {
      out.push_back("selection refers to unknown label index " + std::to_string(sel.label));
    } else if (sel.weights.size() != static_cast<std::size_t>(scm.environment.arity)) {
      out.push_back("selection has " + std::to_string(sel.weights.size()) + " environment rows, expected " +
                    std::to_string(scm.environment.arity));
    } else {
      for (std::size_t e = 0; e < sel.weights.size(); ++e) {
        const auto& w = sel.weights[e];
        if (w.size() != static_cast<std::size_t>(scm.variables[sel.label].arity)) {
          out.push_back("selection row e=" + std::to_string(e) + " has wrong width");
          continue;
        }
        bool any_pos = false;
        for (double x : w) {
          if (!(x >= 0.0) || !std::isfinite(x)) out.push_back("selection row e=" + std::to_string(e) + " has a negative or non-finite weight");
          any_pos = any_pos || x > 0.0;
        }
        if (!any_pos) out.push_back("selection row e=" + std::to_string(e) + " has no positive weight");
      }
    }
  }
  return out;
}

void require_valid(const DiscreteScm& scm) {
  const auto v = validate(scm);
  if (!v.empty()) {
    std::string msg = "invalid model:";
    for (const auto& s : v) msg += "\n  " + s;
    throw ValidationError(msg);
  }
}

std::size_t JointTable::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i].id == id) return i;
  }
  throw Error("joint table has no variable '" + std::string(id) + "'");
}

std::vector<int> JointTable::assignment(std::size_t flat) const {
  std::vector<int> vals(variables.size());
  for (std::size_t k = variables.size(); k-- > 0;) {
    vals[k] = static_cast<int>(flat % variables[k].arity);
    flat /= variables[k].arity;
  }
  return vals;
}

std::size_t JointTable::flat_index(std::span<const int> values) const {
  std::size_t flat = 0;
  for (std::size_t k = 0; k < variables.size(); ++k) flat = flat * variables[k].arity + values[k];
  return flat;
}

namespace {

std::size_t outcome_count(const std::vector<Variable>& vars) {
  std::size_t n = 1;
  for (const auto& v : vars) n *= static_cast<std::size_t>(v.arity);
  return n;
}

std::vector<double> unnormalized_joint(const DiscreteScm& scm, int env) {
  const std::size_t total = outcome_count(scm.variables);
  std::vector<double> probs(total, 1.0);
  std::vector<int> vals(scm.variables.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    double p = 1.0;
    for (const auto& f : scm.factors) {
      std::size_t row = 0;
      for (std::size_t par : f.parents) row = row * scm.variables[par].arity + vals[par];
      p *= f.table(env)[row * scm.variables[f.child].arity + vals[f.child]];
    }
    if (scm.selection) p *= scm.selection->weights[env][vals[scm.selection->label]];
    probs[flat] = p;
    // increment mixed-radix counter, last variable fastest
    for (std::size_t k = vals.size(); k-- > 0;) {
      if (++vals[k] < scm.variables[k].arity) break;
      vals[k] = 0;
    }
  }
  return probs;
}

}  // namespace

JointTable joint_distribution(const DiscreteScm& scm, int env) {
  require_valid(scm);
  if (env < 0 || env >= scm.env_count()) {
    throw Error("environment " + std::to_string(env) + " out of range [0, " + std::to_string(scm.env_count()) + ")");
  }
  auto probs = unnormalized_joint(scm, env);
  const double z = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (!(z > 0.0)) {
    throw DegenerateSelectionError("selection removes all probability mass in environment " + std::to_string(env));
  }
  for (double& p : probs) p /= z;
  return {scm.variables, std::move(probs)};
}

JointTable joint_with_environment(const DiscreteScm& scm, std::span<const double> env_weights) {
  if (env_weights.size() != static_cast<std::size_t>(scm.env_count())) {
    throw Error("expected " + std::to_string(scm.env_count()) + " environment weights");
  }
  const double wsum = std::accumulate(env_weights.begin(), env_weights.end(), 0.0);
  if (!(wsum > 0.0)) throw Error("environment weights must have positive total");
  JointTable out;
  out.variables = scm.variables;
  out.variables.push_back(scm.environment);
  const std::size_t base = outcome_count(scm.variables);
  const std::size_t E = static_cast<std::size_t>(scm.env_count());
  out.probabilities.assign(base * E, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    if (env_weights[e] < 0.0) throw Error("negative environment weight");
    if (env_weights[e] == 0.0) continue;
    const auto j = joint_distribution(scm, static_cast<int>(e));
    for (std::size_t i = 0; i < base; ++i) out.probabilities[i * E + e] = env_weights[e] / wsum * j.probabilities[i];
  }
  return out;
}

JointTable pooled_joint(const DiscreteScm& scm, std::span<const double> env_weights) {
  std::vector<std::string> keep;
  for (const auto& v : scm.variables) keep.push_back(v.id);
  return marginalize(joint_with_environment(scm, env_weights), keep);
}

JointTable marginalize(const JointTable& joint, std::span<const std::string> keep) {
  std::vector<std::size_t> idx;
  JointTable out;
  for (const auto& k : keep) {
    idx.push_back(joint.index_of(k));
    out.variables.push_back(joint.variables[idx.back()]);
  }
  out.probabilities.assign(outcome_count(out.variables), 0.0);
  std::vector<int> sub(idx.size());
  for (std::size_t flat = 0; flat < joint.size(); ++flat) {
    const auto vals = joint.assignment(flat);
    for (std::size_t k = 0; k < idx.size(); ++k) sub[k] = vals[idx[k]];
    out.probabilities[out.flat_index(sub)] += joint.probabilities[flat];
  }
  return out;
}

std::vector<double> conditional(const JointTable& joint, std::string_view target, const Assignment& given) {
  const std::size_t t = joint.index_of(target);
  std::vector<std::pair<std::size_t, int>> cond;
  for (const auto& [name, value] : given) {
    const std::size_t i = joint.index_of(name);
    if (value < 0 || value >= joint.variables[i].arity) throw Error("value out of range for '" + name + "'");
    cond.emplace_back(i, value);
  }
  std::vector<double> out(joint.variables[t].arity, 0.0);
  for (std::size_t flat = 0; flat < joint.size(); ++flat) {
    const auto vals = joint.assignment(flat);
    bool match = true;
    for (const auto& [i, v] : cond) match = match && vals[i] == v;
    if (match) out[vals[t]] += joint.probabilities[flat];
  }
  const double z = std::accumulate(out.begin(), out.end(), 0.0);
  if (!(z > 0.0)) throw Error("conditioning event has zero probability");
  for (double& p : out) p /= z;
  return out;
}

double conditional_mutual_information(const JointTable& joint, std::string_view a, std::string_view b,
                                      std::span<const std::string> given) {
  std::vector<std::string> abc{std::string(a), std::string(b)};
  abc.insert(abc.end(), given.begin(), given.end());
  std::vector<std::string> ac{std::string(a)};
  ac.insert(ac.end(), given.begin(), given.end());
  std::vector<std::string> bc{std::string(b)};
  bc.insert(bc.end(), given.begin(), given.end());
  std::vector<std::string> c(given.begin(), given.end());

  const auto pabc = marginalize(joint, abc);
  const auto pac = marginalize(joint, ac);
  const auto pbc = marginalize(joint, bc);
  JointTable pc = c.empty() ? JointTable{{}, {1.0}} : marginalize(joint, c);

  double mi = 0.0;
  std::vector<int> vac(ac.size()), vbc(bc.size()), vc(c.size());
  for (std::size_t flat = 0; flat < pabc.size(); ++flat) {
    const double p = pabc.probabilities[flat];
    if (p <= 0.0) continue;
    const auto v = pabc.assignment(flat);
    vac[0] = v[0];
    vbc[0] = v[1];
    for (std::size_t k = 0; k < c.size(); ++k) vac[k + 1] = vbc[k + 1] = vc[k] = v[k + 2];
    const double p_ac = pac.probabilities[pac.flat_index(vac)];
    const double p_bc = pbc.probabilities[pbc.flat_index(vbc)];
    const double p_c = c.empty() ? 1.0 : pc.probabilities[pc.flat_index(vc)];
    mi += p * std::log(p * p_c / (p_ac * p_bc));
  }
  return std::max(mi, 0.0);
}

double total_variation(const JointTable& p, const JointTable& q) {
  if (p.variables.size() != q.variables.size() || p.size() != q.size()) throw Error("joint tables have different shapes");
  for (std::size_t i = 0; i < p.variables.size(); ++i) {
    if (p.variables[i].id != q.variables[i].id || p.variables[i].arity != q.variables[i].arity) {
      throw Error("joint tables have different variables");
    }
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p.probabilities[i] - q.probabilities[i]);
  return 0.5 * s;
}

int BayesClassifier::predict(std::span<const int> feature_values) const {
  std::size_t flat = 0;
  for (std::size_t k = 0; k < features.size(); ++k) flat = flat * features[k].arity + feature_values[k];
  return rule.at(flat);
}

BayesClassifier bayes_optimal(const JointTable& joint, std::string_view label, std::span<const std::string> features) {
  for (const auto& f : features) {
    if (f == label) throw Error("feature set must not contain the label '" + std::string(label) + "'");
  }
  std::vector<std::string> keep(features.begin(), features.end());
  keep.emplace_back(label);
  const auto m = marginalize(joint, keep);
  const int ly = m.variables.back().arity;
  BayesClassifier clf;
  clf.label = std::string(label);
  clf.features.assign(m.variables.begin(), m.variables.end() - 1);
  const std::size_t cells = m.size() / ly;
  clf.rule.assign(cells, ly - 1);
  double acc = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    int best = ly - 1;
    for (int y = ly - 1; y >= 0; --y) {
      if (m.probabilities[c * ly + y] > m.probabilities[c * ly + best]) best = y;
    }
    clf.rule[c] = best;
    acc += m.probabilities[c * ly + best];
  }
  clf.accuracy = acc;
  return clf;
}

double accuracy_under(const BayesClassifier& clf, const JointTable& joint) {
  std::vector<std::string> keep;
  for (const auto& f : clf.features) keep.push_back(f.id);
  keep.push_back(clf.label);
  const auto m = marginalize(joint, keep);
  const int ly = m.variables.back().arity;
  double acc = 0.0;
  for (std::size_t c = 0; c < m.size() / ly; ++c) acc += m.probabilities[c * ly + clf.rule[c]];
  return acc;
}

Dataset sample(const DiscreteScm& scm, int env, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error("sample size must be at least 1");
  const auto joint = joint_distribution(scm, env);
  std::vector<double> cdf(joint.size());
  std::partial_sum(joint.probabilities.begin(), joint.probabilities.end(), cdf.begin());

  std::vector<Column> cols;
  for (const auto& v : scm.variables) cols.push_back({v.id, v.arity});
  cols.push_back({scm.environment.id, scm.environment.arity});
  Dataset data(cols);
  data.reserve(n);

  std::mt19937_64 rng(seed);
  std::vector<int> row(cols.size());
  row.back() = env;
  const double total = cdf.back();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = to_unit(rng()) * total;
    std::size_t flat = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (flat >= cdf.size()) flat = cdf.size() - 1;
    const auto vals = joint.assignment(flat);
    std::copy(vals.begin(), vals.end(), row.begin());
    data.append_row(row);
  }
  return data;
}

}  // namespace invrec::scm
