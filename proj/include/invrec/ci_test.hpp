#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "invrec/dataset.hpp"

namespace invrec::scm {

struct CiTestResult {
  double statistic = 0.0;  ///< G = 2 sum O ln(O/E), summed over strata
  double p_value = 1.0;
  int dof = 0;
  /// true when some expected count fell below 5 and the p-value came from
  /// permuting b within strata instead of the chi-square reference.
  bool monte_carlo = false;
};

inline constexpr int kCiPermutations = 2000;

/// Likelihood-ratio test of a independent of b given the `given` columns.
/// Throws Error when the data has no rows.
CiTestResult ci_test(const Dataset& data, std::string_view a, std::string_view b, std::span<const std::string> given,
                     std::uint64_t seed = 0x5eed, int permutations = kCiPermutations);

}  // namespace invrec::scm
