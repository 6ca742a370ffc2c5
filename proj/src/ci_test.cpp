#include "invrec/ci_test.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <boost/math/special_functions/gamma.hpp>

namespace invrec::scm {
namespace {

struct Stratum {
  std::vector<int> a, b;
};

// G statistic of one stratum; `small` is set when an expected count of a
// cell with nonzero margins is below 5. Returns dof contribution via `dof`.
double g_stratum(const std::vector<int>& a, const std::vector<int>& b, int ka, int kb, int* dof, bool* small) {
  std::vector<double> obs(static_cast<std::size_t>(ka) * kb, 0.0), ra(ka, 0.0), cb(kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    obs[a[i] * kb + b[i]] += 1.0;
    ra[a[i]] += 1.0;
    cb[b[i]] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  double g = 0.0;
  int nr = 0, nc = 0;
  for (int i = 0; i < ka; ++i) nr += ra[i] > 0.0;
  for (int j = 0; j < kb; ++j) nc += cb[j] > 0.0;
  for (int i = 0; i < ka; ++i) {
    for (int j = 0; j < kb; ++j) {
      if (ra[i] == 0.0 || cb[j] == 0.0) continue;
      const double e = ra[i] * cb[j] / n;
      if (small && e < 5.0) *small = true;
      const double o = obs[i * kb + j];
      if (o > 0.0) g += o * std::log(o / e);
    }
  }
  if (dof) *dof = std::max(0, (nr - 1) * (nc - 1));
  return 2.0 * g;
}

}  // namespace

CiTestResult ci_test(const Dataset& data, std::string_view a, std::string_view b, std::span<const std::string> given,
                     std::uint64_t seed, int permutations) {
  if (data.rows() == 0) throw Error("independence test on an empty dataset (no strata)");
  const std::size_t ia = data.col(a);
  const std::size_t ib = data.col(b);
  std::vector<std::size_t> ig;
  for (const auto& g : given) ig.push_back(data.col(g));
  const int ka = data.columns()[ia].arity;
  const int kb = data.columns()[ib].arity;

  std::map<std::vector<int>, Stratum> strata;
  std::vector<int> key(ig.size());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    for (std::size_t k = 0; k < ig.size(); ++k) key[k] = data.at(r, ig[k]);
    auto& s = strata[key];
    s.a.push_back(data.at(r, ia));
    s.b.push_back(data.at(r, ib));
  }

  CiTestResult res;
  for (const auto& [k, s] : strata) {
    int dof = 0;
    res.statistic += g_stratum(s.a, s.b, ka, kb, &dof, &res.monte_carlo);
    res.dof += dof;
  }
  if (res.dof == 0) {
    res.p_value = 1.0;
    res.monte_carlo = false;
    return res;
  }
  if (!res.monte_carlo) {
    res.p_value = boost::math::gamma_q(0.5 * res.dof, 0.5 * std::max(0.0, res.statistic));
    return res;
  }
  std::mt19937_64 rng(seed);
  int exceed = 0;
  const double tol = 1e-9 * std::max(1.0, res.statistic);
  for (int p = 0; p < permutations; ++p) {
    double g = 0.0;
    for (auto& [k, s] : strata) {
      std::vector<int> shuffled = s.b;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      g += g_stratum(s.a, shuffled, ka, kb, nullptr, nullptr);
    }
    exceed += g >= res.statistic - tol;
  }
  res.p_value = (1.0 + exceed) / (1.0 + permutations);
  return res;
}

}  // namespace invrec::scm
