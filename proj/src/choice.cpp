#include "invrec/choice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace invrec::choice {
namespace {

void require_in(int v, int arity, const char* what) {
  if (v < 0 || v >= arity) {
    throw Error(std::string(what) + "=" + std::to_string(v) + " outside [0, " + std::to_string(arity) + ")");
  }
}

}  // namespace

double BeliefModel::at(int x, int r, int e, int xbar) const {
  return table[((static_cast<std::size_t>(x) * r_arity + r) * e_arity + e) * xbar_arity + xbar];
}

void BeliefModel::check() const {
  if (x_arity < 1 || r_arity < 1 || e_arity < 1 || xbar_arity < 1) throw ValidationError("belief arities must be positive");
  const std::size_t rows = static_cast<std::size_t>(x_arity) * r_arity * e_arity;
  if (table.size() != rows * xbar_arity) {
    throw ValidationError("belief table has " + std::to_string(table.size()) + " entries, expected " +
                          std::to_string(rows * xbar_arity));
  }
  for (std::size_t row = 0; row < rows; ++row) {
    double s = 0.0;
    for (int k = 0; k < xbar_arity; ++k) {
      const double p = table[row * xbar_arity + k];
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("belief row " + std::to_string(row) + " has an entry outside [0, 1]");
      s += p;
    }
    if (!(std::abs(s - 1.0) <= 1e-12)) throw ValidationError("belief row " + std::to_string(row) + " does not sum to 1");
  }
}

double ValueModel::at(int x, int xbar, int r) const {
  return table[(static_cast<std::size_t>(x) * xbar_arity + xbar) * r_arity + r];
}

void ValueModel::check() const {
  const std::size_t want = static_cast<std::size_t>(x_arity) * xbar_arity * r_arity;
  if (table.size() != want) {
    throw ValidationError("value table has " + std::to_string(table.size()) + " entries, expected " + std::to_string(want));
  }
  for (double v : table) {
    if (!std::isfinite(v)) throw ValidationError("value table has a non-finite entry");
  }
}

double perceived_value(const BeliefModel& belief, const ValueModel& value, int x, int r, int e) {
  if (belief.x_arity != value.x_arity || belief.r_arity != value.r_arity || belief.xbar_arity != value.xbar_arity) {
    throw ShapeError("belief and value tables disagree on their domains");
  }
  require_in(x, belief.x_arity, "x");
  require_in(r, belief.r_arity, "r");
  require_in(e, belief.e_arity, "e");
  double v = 0.0;
  for (int k = 0; k < belief.xbar_arity; ++k) v += value.at(x, k, r) * belief.at(x, r, e, k);
  return v;
}

Dataset simulate_choices(const BeliefModel& belief, const ValueModel& value, const Dataset& contexts, std::uint64_t) {
  const std::size_t cx = contexts.col("x");
  const std::size_t cr = contexts.col("r");
  const std::size_t ce = contexts.col("e");
  std::vector<Column> cols;
  std::vector<std::size_t> src;
  for (std::size_t i = 0; i < contexts.cols(); ++i) {
    if (i == ce || contexts.columns()[i].name == "y") continue;
    cols.push_back(contexts.columns()[i]);
    src.push_back(i);
  }
  cols.push_back({"y", 2});
  cols.push_back({"e", std::max(contexts.columns()[ce].arity, belief.e_arity)});
  Dataset out(cols);
  out.reserve(contexts.rows());
  std::vector<int> row(cols.size());
  for (std::size_t n = 0; n < contexts.rows(); ++n) {
    for (std::size_t k = 0; k < src.size(); ++k) row[k] = contexts.at(n, src[k]);
    const int e = contexts.at(n, ce);
    row[src.size()] = choose(perceived_value(belief, value, contexts.at(n, cx), contexts.at(n, cr), e));
    row[src.size() + 1] = e;
    out.append_row(row);
  }
  return out;
}

ChoiceModel parse_choice_model(const std::string& text) {
  using nlohmann::json;
  ChoiceModel m;
  try {
    const json doc = json::parse(text);
    m.belief.x_arity = m.value.x_arity = doc.value("x_arity", 2);
    m.belief.r_arity = m.value.r_arity = doc.value("r_arity", 2);
    m.belief.xbar_arity = m.value.xbar_arity = doc.value("xbar_arity", 2);
    m.belief.e_arity = doc.value("e_arity", 2);
    for (const auto& row : doc.at("belief")) {
      for (const auto& p : row) m.belief.table.push_back(p.get<double>());
    }
    // value rows are per (x, r) with one entry per x̄; stored as (x, x̄, r)
    const auto& vrows = doc.at("value");
    m.value.table.assign(static_cast<std::size_t>(m.value.x_arity) * m.value.xbar_arity * m.value.r_arity, 0.0);
    if (vrows.size() != static_cast<std::size_t>(m.value.x_arity) * m.value.r_arity) {
      throw ValidationError("value has " + std::to_string(vrows.size()) + " rows, expected one per (x, r)");
    }
    for (int x = 0; x < m.value.x_arity; ++x) {
      for (int r = 0; r < m.value.r_arity; ++r) {
        const auto& row = vrows.at(static_cast<std::size_t>(x) * m.value.r_arity + r);
        if (row.size() != static_cast<std::size_t>(m.value.xbar_arity)) throw ValidationError("value row has wrong width");
        for (int k = 0; k < m.value.xbar_arity; ++k) {
          m.value.table[(static_cast<std::size_t>(x) * m.value.xbar_arity + k) * m.value.r_arity + r] = row[k].get<double>();
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed choice model: ") + e.what());
  }
  m.belief.check();
  m.value.check();
  return m;
}

ChoiceModel load_choice_model(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_choice_model(ss.str());
}

}  // namespace invrec::choice
