// Observationally equivalent re-orientation of the x_sp / r edge: the
// balance equation over the per-environment spurious-feature factors has a
// segment of solutions, and any interior point other than the identity
// generically makes r and x_ac environment dependent given y.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "invrec/scm.hpp"

namespace invrec::scm {
namespace {

void require_binary_subclass_model(const DiscreteScm& m) {
  for (const char* id : {"x_sp", "x_ac", "r", "y"}) {
    const auto i = m.index_of(id);
    if (m.variables[i].arity != 2) throw ConstructionError(std::string("variable '") + id + "' must be binary");
  }
  if (m.variables.size() != 4) throw ConstructionError("source must have exactly the variables x_sp, x_ac, r, y");
}

std::vector<double> mixture_weights(const DiscreteScm& m, std::span<const int> envs) {
  std::vector<double> w(m.env_count(), 0.0);
  for (int e : envs) w.at(e) = 1.0 / static_cast<double>(envs.size());
  return w;
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

ReorientationResult reorient_spurious_edge(const DiscreteScm& source, std::span<const int> train_envs, double step) {
  require_valid(source);
  require_binary_subclass_model(source);
  if (!(step > 0.0 && step <= 1.0)) throw ConstructionError("step must lie in (0, 1]");
  if (train_envs.size() != 2 || train_envs[0] == train_envs[1]) {
    throw ConstructionError("exactly two distinct training environments are required");
  }
  for (int e : train_envs) {
    if (e < 0 || e >= source.env_count()) throw ConstructionError("training environment out of range");
  }
  const int E = source.env_count();
  const std::size_t ix = source.index_of("x_sp");
  const std::size_t iac = source.index_of("x_ac");
  const std::size_t ir = source.index_of("r");
  const std::size_t iy = source.index_of("y");

  const auto w = mixture_weights(source, train_envs);
  const JointTable pooled = pooled_joint(source, w);

  // per-environment label marginals and spurious-feature conditionals
  std::vector<std::array<double, 2>> p_y(E), p_xsp1(E);
  for (int e = 0; e < E; ++e) {
    const auto j = joint_distribution(source, e);
    const auto py = conditional(j, "y", {});
    p_y[e] = {py[0], py[1]};
    for (int y = 0; y < 2; ++y) {
      p_xsp1[e][y] = py[y] > 0.0 ? conditional(j, "x_sp", {{"y", y}})[1] : 0.5;
    }
  }

  DiscreteScm out;
  out.variables = source.variables;
  out.environment = source.environment;
  out.graph_tag = GraphTag::XspToR;
  out.class_tag = source.class_tag;

  // y: per-environment root carrying the source's label shift
  FactorTable fy{iy, {}, true, {}};
  for (int e = 0; e < E; ++e) fy.tables.push_back({p_y[e][0], p_y[e][1]});

  FactorTable fac{iac, {iy}, false, {{}}};
  for (int y = 0; y < 2; ++y) {
    std::vector<double> c;
    try {
      c = conditional(pooled, "x_ac", {{"y", y}});
    } catch (const Error&) {
      throw ConstructionError("label value y=" + std::to_string(y) + " never occurs in the training environments");
    }
    fac.tables[0].insert(fac.tables[0].end(), c.begin(), c.end());
  }

  FactorTable fr{ir, {iy, ix}, false, {{}}};
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      std::vector<double> c;
      try {
        c = conditional(pooled, "r", {{"y", y}, {"x_sp", x}});
      } catch (const Error&) {
        throw ConstructionError("D(r | y=" + std::to_string(y) + ", x_sp=" + std::to_string(x) +
                                ") is undefined in the source; no construction exists");
      }
      fr.tables[0].insert(fr.tables[0].end(), c.begin(), c.end());
    }
  }

  ReorientationResult result;
  std::vector<std::array<double, 2>> chosen = p_xsp1;  // [e][y]
  const int e0 = train_envs[0];
  const int e1 = train_envs[1];
  for (int y = 0; y < 2; ++y) {
    const double a0 = w[e0] * p_y[e0][y];
    const double a1 = w[e1] * p_y[e1][y];
    const double norm = std::hypot(a0, a1);
    if (!(norm > 0.0)) throw ConstructionError("label value y=" + std::to_string(y) + " has zero probability in training");
    const std::array<double, 2> dir{a1 / norm, -a0 / norm};
    const std::array<double, 2> id{p_xsp1[e0][y], p_xsp1[e1][y]};
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2; ++k) {
      if (dir[k] > 0.0) {
        lo = std::max(lo, -id[k] / dir[k]);
        hi = std::min(hi, (1.0 - id[k]) / dir[k]);
      } else if (dir[k] < 0.0) {
        lo = std::max(lo, (1.0 - id[k]) / dir[k]);
        hi = std::min(hi, -id[k] / dir[k]);
      }
    }
    ReorientationResult::Cell cell;
    cell.y = y;
    cell.identity[0] = id[0];
    cell.identity[1] = id[1];
    cell.feasible_length = std::max(0.0, hi - lo);
    double t = 0.0;
    if (cell.feasible_length > 1e-15) {
      t = hi >= -lo ? step * hi : step * lo;
      result.environment_dependence_induced = true;
    }
    cell.chosen[0] = clamp01(id[0] + t * dir[0]);
    cell.chosen[1] = clamp01(id[1] + t * dir[1]);
    chosen[e0][y] = cell.chosen[0];
    chosen[e1][y] = cell.chosen[1];
    result.cells.push_back(cell);
  }

  FactorTable fx{ix, {iy}, true, {}};
  for (int e = 0; e < E; ++e) {
    fx.tables.push_back({1.0 - chosen[e][0], chosen[e][0], 1.0 - chosen[e][1], chosen[e][1]});
  }

  out.factors = {fy, fac, fx, fr};
  require_valid(out);
  result.model = std::move(out);
  return result;
}

ReorientationResult construct_believer_from_skeptic(const DiscreteScm& source) {
  const int envs[] = {0, 1};
  return reorient_spurious_edge(source, envs);
}

double max_posterior_gap(const DiscreteScm& scm, std::span<const int> envs, bool equalize_label_prior) {
  if (envs.size() < 2) throw Error("posterior gap needs at least two environments");
  const std::vector<std::string> keep{"r", "x_ac", "y"};
  std::vector<JointTable> m;
  std::array<double, 2> prior{0.0, 0.0};
  for (int e : envs) {
    m.push_back(marginalize(joint_distribution(scm, e), keep));
    const auto py = conditional(m.back(), "y", {});
    prior[0] += py[0] / static_cast<double>(envs.size());
    prior[1] += py[1] / static_cast<double>(envs.size());
  }
  double gap = 0.0;
  for (int r = 0; r < 2; ++r) {
    for (int x = 0; x < 2; ++x) {
      std::vector<double> post;
      bool defined = true;
      for (const auto& j : m) {
        const double j0 = j.probabilities[j.flat_index(std::array<int, 3>{r, x, 0})];
        const double j1 = j.probabilities[j.flat_index(std::array<int, 3>{r, x, 1})];
        double n0 = j0, n1 = j1;
        if (equalize_label_prior) {
          const auto py = conditional(j, "y", {});
          n0 = py[0] > 0.0 ? prior[0] * j0 / py[0] : 0.0;
          n1 = py[1] > 0.0 ? prior[1] * j1 / py[1] : 0.0;
        }
        if (!(n0 + n1 > 0.0)) {
          defined = false;
          break;
        }
        post.push_back(n1 / (n0 + n1));
      }
      if (!defined) continue;
      for (std::size_t a = 0; a < post.size(); ++a) {
        for (std::size_t b = a + 1; b < post.size(); ++b) gap = std::max(gap, std::abs(post[a] - post[b]));
      }
    }
  }
  return gap;
}

}  // namespace invrec::scm
