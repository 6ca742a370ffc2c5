#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "invrec/experiments.hpp"

namespace invrec::experiments {
namespace {

void require_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(what) + " must lie in [0, 1]");
}

Dataset with_user_column(const Dataset& d, int user_id) {
  std::vector<Column> cols{{"u", std::max(2, user_id + 1)}};
  cols.insert(cols.end(), d.columns().begin(), d.columns().end());
  Dataset out(cols);
  out.reserve(d.rows());
  std::vector<int> row(cols.size());
  for (std::size_t r = 0; r < d.rows(); ++r) {
    row[0] = user_id;
    std::copy(d.row(r).begin(), d.row(r).end(), row.begin() + 1);
    out.append_row(row);
  }
  return out;
}

}  // namespace

void SubclassParams::check() const {
  for (double q : q_e) require_prob(q, "q_e");
  for (double p : p_y_given_e) require_prob(p, "p_y_given_e");
  require_prob(p_xac, "p_xac");
  require_prob(p_r, "p_r");
  require_prob(copy_r, "copy_r");
  if (n_per_env < 1) throw Error("n_per_env must be at least 1");
}

scm::DiscreteScm subclass_model(const SubclassParams& params, scm::GraphTag tag) {
  params.check();
  using scm::FactorTable;
  scm::DiscreteScm m;
  m.variables = {{"x_sp", 2}, {"x_ac", 2}, {"r", 2}, {"y", 2}};
  m.environment = {"e", 3};
  m.graph_tag = tag;
  m.class_tag = scm::ClassTag::AntiCausal;
  const std::size_t XSP = 0, XAC = 1, R = 2, Y = 3;
  const double a = params.p_xac;
  m.factors.push_back(FactorTable{Y, {}, false, {{0.5, 0.5}}});
  m.factors.push_back(FactorTable{XAC, {Y}, false, {{a, 1.0 - a, 1.0 - a, a}}});
  if (tag == scm::GraphTag::XspToR) {
    FactorTable xsp{XSP, {Y}, true, {}};
    for (double q : params.q_e) xsp.tables.push_back({q, 1.0 - q, 1.0 - q, q});
    m.factors.push_back(xsp);
    m.factors.push_back(FactorTable{R, {XSP}, false, {{1.0, 0.0, 0.0, 1.0}}});
  } else if (tag == scm::GraphTag::RToXsp) {
    const double pr = params.p_r;
    m.factors.push_back(FactorTable{R, {Y}, false, {{pr, 1.0 - pr, 1.0 - pr, pr}}});
    FactorTable xsp{XSP, {Y, R}, true, {}};
    for (double q : params.q_e) {
      std::vector<double> t;
      for (int y = 0; y < 2; ++y) {
        for (int r = 0; r < 2; ++r) {
          const double p1 = params.copy_r * r + (1.0 - params.copy_r) * (y ? q : 1.0 - q);
          t.push_back(1.0 - p1);
          t.push_back(p1);
        }
      }
      xsp.tables.push_back(t);
    }
    m.factors.push_back(xsp);
  } else {
    throw Error("subclass model needs an oriented x_sp / r edge");
  }
  scm::SelectionSpec sel;
  sel.label = Y;
  for (double p : params.p_y_given_e) sel.weights.push_back({1.0 - p, p});
  m.selection = sel;
  scm::require_valid(m);
  return m;
}

SubclassData gen_subclass_experiment(const SubclassParams& params, scm::GraphTag tag, std::uint64_t seed, int user_id) {
  SubclassData out;
  out.model = subclass_model(params, tag);
  for (int e = 0; e < 3; ++e) {
    Dataset d = scm::sample(out.model, e, params.n_per_env, derive_seed(seed, {static_cast<std::uint64_t>(e)}));
    if (user_id >= 0) d = with_user_column(d, user_id);
    if (e < 2) {
      out.train.append(d);
    } else {
      out.test = std::move(d);
    }
  }
  return out;
}

std::pair<Dataset, Dataset> mix_subpopulations(const Dataset& a, const Dataset& b, double alpha, std::uint64_t seed) {
  if (!(alpha >= 0.0 && alpha <= 0.5)) throw Error("alpha must lie in [0, 0.5]");
  std::mt19937_64 rng(seed);
  auto choose = [&](std::size_t n) {
    const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng() % (n - i)]);
    std::vector<char> moved(n, 0);
    for (std::size_t i = 0; i < k; ++i) moved[idx[i]] = 1;
    return moved;
  };
  const auto ma = choose(a.rows());
  const auto mb = choose(b.rows());
  auto split = [](const Dataset& d, const std::vector<char>& moved, bool want_moved) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      if (static_cast<bool>(moved[i]) == want_moved) idx.push_back(i);
    }
    return d.select(idx);
  };
  Dataset out_a = split(a, ma, false);
  out_a.append(split(b, mb, true));
  Dataset out_b = split(b, mb, false);
  out_b.append(split(a, ma, true));
  return {std::move(out_a), std::move(out_b)};
}

Metrics evaluate(const model::Predictor& p, const std::vector<trainer::EnvBatch>& data) {
  Metrics m;
  std::size_t correct = 0;
  for (const auto& b : data) {
    const auto pred = model::predict_labels(p, b.X);
    std::size_t c = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) c += pred[i] == b.y[i];
    correct += c;
    m.n += pred.size();
    m.per_env.emplace_back(b.env, pred.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(pred.size()));
  }
  if (m.n == 0) throw Error("cannot evaluate on an empty dataset");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  return m;
}

Metrics evaluate(const model::Predictor& p, const Dataset& data) {
  return evaluate(p, trainer::split_by_environment(data));
}

int default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 0) jobs = default_jobs();
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next == n) return;
            i = next++;
          }
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

report::ExperimentReport run_reorientation(const SubclassParams& params, std::uint64_t seed) {
  report::ExperimentReport rep;
  rep.experiment = "appendixA";
  rep.seed = seed;
  rep.config = to_json(params);
  const auto source = subclass_model(params, scm::GraphTag::RToXsp);
  const int train_envs[] = {0, 1};
  const auto built = scm::reorient_spurious_edge(source, train_envs);
  const std::vector<double> w{0.5, 0.5, 0.0};
  const double tv = scm::total_variation(scm::pooled_joint(source, w), scm::pooled_joint(built.model, w));
  const double gap_src = scm::max_posterior_gap(source, train_envs, false);
  const double gap_new = scm::max_posterior_gap(built.model, train_envs, false);
  const double eq_src = scm::max_posterior_gap(source, train_envs, true);
  const double eq_new = scm::max_posterior_gap(built.model, train_envs, true);
  const std::vector<std::string> given{"y"};
  const double cmi_src = scm::conditional_mutual_information(scm::joint_with_environment(source, w), "r", "e", given);
  const double cmi_new =
      scm::conditional_mutual_information(scm::joint_with_environment(built.model, w), "r", "e", given);

  auto metric = [&](const std::string& model, const std::string& name, double v) {
    rep.rows.push_back(report::Row().add("model", model).add("metric", name).add("value", v));
  };
  metric("source", "posterior_gap", gap_src);
  metric("source", "posterior_gap_equal_prior", eq_src);
  metric("source", "cmi_r_e_given_y", cmi_src);
  metric("constructed", "posterior_gap", gap_new);
  metric("constructed", "posterior_gap_equal_prior", eq_new);
  metric("constructed", "cmi_r_e_given_y", cmi_new);
  metric("pair", "pooled_total_variation", tv);

  report::Json cells = report::Json::array();
  for (const auto& c : built.cells) {
    cells.push_back({{"y", c.y},
                     {"identity", {c.identity[0], c.identity[1]}},
                     {"chosen", {c.chosen[0], c.chosen[1]}},
                     {"feasible_length", c.feasible_length}});
  }
  rep.summary = {{"pooled_total_variation", tv},
                 {"posterior_gap_source", gap_src},
                 {"posterior_gap_constructed", gap_new},
                 {"posterior_gap_equal_prior_source", eq_src},
                 {"posterior_gap_equal_prior_constructed", eq_new},
                 {"environment_dependence_induced", built.environment_dependence_induced},
                 {"balance_cells", cells}};
  return rep;
}

}  // namespace invrec::experiments
