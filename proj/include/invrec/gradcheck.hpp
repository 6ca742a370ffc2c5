#pragma once

// Central finite-difference checks of every analytic gradient in the
// library: log-loss, squared MMD, CORAL, predictor backprop and the full
// penalized objective.

#include <cstdint>
#include <string>
#include <vector>

namespace invrec::gradcheck {

inline constexpr double kStep = 1e-5;
inline constexpr double kTolerance = 1e-4;

struct CaseResult {
  std::string suite;
  std::string name;
  double rel_error = 0.0;
};

struct Report {
  std::vector<CaseResult> cases;

  const CaseResult& worst() const;
  bool passed(double tol = kTolerance) const { return !cases.empty() && worst().rel_error < tol; }
};

/// ||g - g_fd|| / max(||g|| + ||g_fd||, 1e-12)
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// Runs all suites. `break_gradients` scales every analytic gradient by 1.01
/// so the checker itself can be shown to fail.
Report run_all(std::uint64_t seed, bool break_gradients = false);

Report loss_suite(std::uint64_t seed, bool break_gradients = false);
Report mmd_suite(std::uint64_t seed, bool break_gradients = false);
Report coral_suite(std::uint64_t seed, bool break_gradients = false);
Report model_suite(std::uint64_t seed, bool break_gradients = false);
Report objective_suite(std::uint64_t seed, bool break_gradients = false);

}  // namespace invrec::gradcheck
