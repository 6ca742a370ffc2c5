// Acceptance checks: one PASS/FAIL line per criterion, with the measured
// values. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "invrec/divergence.hpp"
#include "invrec/experiments.hpp"
#include "invrec/gradcheck.hpp"
#include "invrec/scm.hpp"

using namespace invrec;
using namespace invrec::experiments;

namespace {

constexpr std::uint64_t kSeed = 7;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double num(const report::Json& j) { return j.is_string() ? std::stod(j.get<std::string>()) : j.get<double>(); }

Matrix random_matrix(Rng& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) m(i, k) = rng.normal();
  }
  return m;
}

Outcome identities() {
  Rng rng(derive_seed(kSeed, {1}));
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(40), d = 1 + rng.below(6);
    const Matrix a = random_matrix(rng, n, d);
    Matrix shifted = a;
    for (std::size_t k = 0; k < d; ++k) {
      const double c = 3.0 * rng.normal();
      for (std::size_t i = 0; i < n; ++i) shifted(i, k) += c;
    }
    worst = std::max(worst, std::abs(divergence::mmd2(a, a, divergence::KernelSpec::median())));
    worst = std::max(worst, std::abs(divergence::mmd2(a, a, divergence::KernelSpec::fixed(0.5 + rng.uniform()))));
    worst = std::max(worst, std::abs(divergence::coral(a, a)));
    worst = std::max(worst, std::abs(divergence::coral(a, shifted)));
  }
  return {worst <= 1e-12, "max |value| " + fmt("%.2e", worst)};
}

Outcome gradients() {
  double worst = 0.0;
  std::string where;
  std::size_t cases = 0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const auto r = gradcheck::run_all(derive_seed(kSeed, {2, s}));
    cases += r.cases.size();
    if (r.worst().rel_error >= worst) {
      worst = r.worst().rel_error;
      where = r.worst().suite + "/" + r.worst().name;
    }
  }
  return {cases > 0 && worst < 1e-4, std::to_string(cases) + " cases, worst " + fmt("%.2e", worst) + " (" + where + ")"};
}

Outcome certification() {
  const auto m = subclass_model({}, scm::GraphTag::XspToR);
  const std::vector<double> w{0.5, 0.5, 0.0};
  const auto pooled = scm::pooled_joint(m, w);
  const std::vector<std::string> ac{"x_ac"}, all{"x_sp", "x_ac", "r"};
  const double acc_ac = scm::bayes_optimal(pooled, "y", ac).accuracy;
  const auto id = scm::bayes_optimal(pooled, "y", all);
  const double ood = scm::accuracy_under(id, scm::joint_distribution(m, 2));
  const bool ok = std::abs(acc_ac - 0.75) < 1e-12 && id.accuracy >= 0.77 && id.accuracy <= 0.79 && ood <= 0.55;
  return {ok, "acc{x_ac} " + fmt("%.6f", acc_ac) + ", ID " + fmt("%.6f", id.accuracy) + ", OOD " + fmt("%.6f", ood)};
}

// mean accuracy of a subclass-table cell, keyed by graph rather than display name
double table1_cell(const report::ExperimentReport& rep, const std::string& reg, const std::string& users,
                   scm::GraphTag g, const char* field) {
  for (const auto& c : rep.summary["mean_accuracy"]) {
    if (c["regularization"] == reg && c["users_train"] == users && c["graph"] == scm::to_string(g)) return num(c[field]);
  }
  throw Error("missing subclass table cell " + reg + " " + users);
}

// the subclass-table run of criterion 4, reused by the determinism check
std::optional<report::ExperimentReport> table1_run;

const report::ExperimentReport& table1_report() {
  if (!table1_run) table1_run = run_table1(default_table1_config(), kSeed, 1);
  return *table1_run;
}

bool strictly_between(double v, double a, double b) { return v > std::min(a, b) && v < std::max(a, b); }

Outcome table1() {
  const auto cfg = default_table1_config();
  const auto& rep = table1_report();
  const auto X = scm::GraphTag::XspToR, R = scm::GraphTag::RToXsp;
  const std::string gx = cfg.labels.of(X), gr = cfg.labels.of(R);
  const double base_ood = table1_cell(rep, "lambda=0", "both", X, "ood_accuracy");
  const double base_id = table1_cell(rep, "lambda=0", "both", X, "id_accuracy");
  const double per_x = table1_cell(rep, "lambda>0", gx, X, "ood_accuracy");
  const double per_r = table1_cell(rep, "lambda>0", gr, R, "ood_accuracy");
  const double zero_r = table1_cell(rep, "lambda=0", "both", R, "ood_accuracy");
  const double both_x = table1_cell(rep, "lambda>0", "both", X, "ood_accuracy");
  const double both_r = table1_cell(rep, "lambda>0", "both", R, "ood_accuracy");
  const bool a = base_ood >= 0.45 && base_ood <= 0.55 && base_id >= 0.73;
  const bool b = per_x >= 0.70;
  const bool c = per_r >= 0.78;
  const bool d = strictly_between(both_x, base_ood, per_x) && strictly_between(both_r, zero_r, per_r);
  std::string s = "lambda=0 XspToR ID/OOD " + fmt("%.4f", base_id) + "/" + fmt("%.4f", base_ood) +
                  (a ? "" : " [x]") + "; per-group OOD XspToR " + fmt("%.4f", per_x) + (b ? "" : " [x]") +
                  ", RToXsp " + fmt("%.4f", per_r) + (c ? "" : " [x]") + "; pooled lambda>0 OOD XspToR " +
                  fmt("%.4f", both_x) + " in (" + fmt("%.4f", base_ood) + "," + fmt("%.4f", per_x) + "), RToXsp " +
                  fmt("%.4f", both_r) + " in (" + fmt("%.4f", zero_r) + "," + fmt("%.4f", per_r) + ")" +
                  (d ? "" : " [x]");
  return {a && b && c && d, s};
}

Outcome sweep() {
  const auto cfg = default_sweep_config();
  const auto& means = cfg.data.means;
  auto at = [&](double m) {
    for (std::size_t i = 0; i < means.size(); ++i) {
      if (std::abs(means[i] - m) < 1e-9) return i;
    }
    throw Error("sweep grid lacks mean " + std::to_string(m));
  };
  const std::size_t hi = at(0.8), lo = at(0.2);
  int passed = 0;
  std::string s;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const auto rep = run_sweep(cfg, derive_seed(kSeed, {5, k}), default_jobs());
    const auto& acc = rep.summary["test_accuracy"];
    auto v = [&](const char* c, std::size_t i) { return num(acc[c][i]); };
    double cmin = 1.0, cmax = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) {
      cmin = std::min(cmin, v("conditional", i));
      cmax = std::max(cmax, v("conditional", i));
    }
    const bool ok = v("conditional", hi) >= 0.75 && v("marginal", hi) >= 0.75 && v("none", hi) >= 0.75 &&
                    v("conditional", lo) >= 0.70 && v("none", lo) <= 0.45 && v("marginal", lo) <= 0.55 &&
                    cmax - cmin <= 0.10;
    passed += ok;
    s += (k ? "; " : "") + std::string("seed ") + std::to_string(k) + (ok ? " ok" : " no") + " (0.8: C/M/N " +
         fmt("%.3f", v("conditional", hi)) + "/" + fmt("%.3f", v("marginal", hi)) + "/" + fmt("%.3f", v("none", hi)) +
         ", 0.2: " + fmt("%.3f", v("conditional", lo)) + "/" + fmt("%.3f", v("marginal", lo)) + "/" +
         fmt("%.3f", v("none", lo)) + ", C range " + fmt("%.3f", cmax - cmin) + ")";
  }
  return {passed >= 2, std::to_string(passed) + "/3 seeds: " + s};
}

Outcome mixture() {
  const auto rep = run_mixture(default_mixture_config(), kSeed, default_jobs());
  bool ok = !rep.summary["curve"].empty();
  std::string s;
  for (const auto& p : rep.summary["curve"]) {
    const double adv = num(p["advantage"]);
    ok = ok && adv >= 0.03;
    s += (s.empty() ? "" : ", ") + std::string("alpha ") + fmt("%.2f", p["alpha"].get<double>()) + ": " +
         fmt("%.4f", num(p["per_group_ood"])) + " vs " + fmt("%.4f", num(p["pooled_ood"]));
  }
  return {ok, s};
}

Outcome reorientation() {
  const auto rep = run_reorientation({}, kSeed);
  const double tv = rep.summary["pooled_total_variation"];
  const double gap = rep.summary["posterior_gap_constructed"];
  const double eq = rep.summary["posterior_gap_equal_prior_constructed"];
  return {tv < 1e-9 && gap > 0.01 && eq > 0.01,
          "TV " + fmt("%.2e", tv) + ", posterior gap " + fmt("%.4f", gap) + ", equal-prior gap " + fmt("%.4f", eq)};
}

Outcome invariance() {
  const auto rep = run_invariance_check(default_invariance_check_config(), kSeed, default_jobs());
  const int R = rep.summary["replicates"];
  const int kept = rep.summary["conditional_not_rejected_at_0.05"];
  const int rejected = rep.summary["unregularized_rejected_at_0.01"];
  return {R == 10 && kept >= 8 && rejected >= 9, "regularized not rejected " + std::to_string(kept) + "/" +
                                                    std::to_string(R) + ", unregularized rejected " +
                                                    std::to_string(rejected) + "/" + std::to_string(R)};
}

Outcome determinism() {
  const auto& a = table1_report();
  const auto b = run_table1(default_table1_config(), kSeed, std::max(2, default_jobs()));
  const bool ok = a.csv() == b.csv() && a.summary_json() == b.summary_json();
  return {ok, "csv " + std::to_string(a.csv().size()) + " bytes, summary " + std::to_string(a.summary_json().size()) +
                  " bytes, " + (ok ? "identical" : "different")};
}

Outcome cmi() {
  const std::vector<std::string> y{"y"};
  const std::vector<double> w{0.5, 0.5, 0.0};
  const double r_to_xsp =
      scm::conditional_mutual_information(scm::joint_with_environment(subclass_model({}, scm::GraphTag::RToXsp), w), "r", "e", y);
  const double xsp_to_r =
      scm::conditional_mutual_information(scm::joint_with_environment(subclass_model({}, scm::GraphTag::XspToR), w), "r", "e", y);
  return {r_to_xsp < 1e-12 && xsp_to_r > 1e-4,
          "I(r;e|y) RToXsp " + fmt("%.2e", r_to_xsp) + ", XspToR " + fmt("%.2e", xsp_to_r)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "estimator identities", 1.0, identities},
      {2, "gradient checks", 10.0, gradients},
      {3, "oracle certification", 5.0, certification},
      {4, "subclass table", 600.0, table1},
      {5, "correlation sweep", 900.0, sweep},
      {6, "subpopulation mixing", 900.0, mixture},
      {7, "re-orientation", 1.0, reorientation},
      {8, "invariance test", 300.0, invariance},
      {9, "determinism", 600.0, determinism},
      {10, "conditional independence of r", 1.0, cmi},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %d %s: %s; %.2f s (budget %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s, in_time ? "" : " [over budget]");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
