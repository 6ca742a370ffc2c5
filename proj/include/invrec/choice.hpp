#pragma once

// Boundedly-rational choice: a user integrates a subjective belief over the
// unobserved item features x̄ into a perceived value and picks the item iff
// that value is strictly positive.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "invrec/dataset.hpp"

namespace invrec::choice {

/// p_u(x̄ | x, r, e), one probability vector per (x, r, e).
struct BeliefModel {
  int x_arity = 2, r_arity = 2, e_arity = 2, xbar_arity = 2;
  /// index ((x * r_arity + r) * e_arity + e) * xbar_arity + x̄
  std::vector<double> table;

  double at(int x, int r, int e, int xbar) const;
  /// Throws ValidationError when the table is misshaped or a row is not a
  /// probability vector within 1e-12.
  void check() const;
};

/// v_u(x, x̄, r), dense.
struct ValueModel {
  int x_arity = 2, xbar_arity = 2, r_arity = 2;
  /// index (x * xbar_arity + x̄) * r_arity + r
  std::vector<double> table;

  double at(int x, int xbar, int r) const;
  void check() const;
};

/// sum over x̄ of v(x, x̄, r) p(x̄ | x, r, e). Throws Error outside the domain.
double perceived_value(const BeliefModel& belief, const ValueModel& value, int x, int r, int e);

/// 1 iff v > 0.
inline int choose(double v_tilde) { return v_tilde > 0.0 ? 1 : 0; }

/// Labels contexts carrying columns x, r and e (other columns are kept).
/// Choice is deterministic, so `seed` does not influence the result; it is
/// accepted so the call shape matches the other generators. The output has
/// the context columns with e moved last and y inserted before it.
Dataset simulate_choices(const BeliefModel& belief, const ValueModel& value, const Dataset& contexts,
                         std::uint64_t seed = 0);

/// {"x_arity": 2, "r_arity": 2, "e_arity": 2, "xbar_arity": 2,
///  "belief": [[p(x̄=0), p(x̄=1)], ...],   one row per (x, r, e)
///  "value":  [[v(x̄=0), v(x̄=1)], ...]}   one row per (x, r)
struct ChoiceModel {
  BeliefModel belief;
  ValueModel value;
};
ChoiceModel parse_choice_model(const std::string& text);
ChoiceModel load_choice_model(const std::filesystem::path& path);

}  // namespace invrec::choice
