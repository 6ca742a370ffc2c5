#pragma once

// Two-sample distances between sets of representation vectors (rows of a
// Matrix): squared MMD with a Gaussian kernel and CORAL, each with analytic
// gradients with respect to every input row.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "invrec/common.hpp"

namespace invrec::divergence {

/// Gaussian kernel k(s, t) = exp(-||s - t||^2 / (2 sigma^2)). A non-positive
/// bandwidth means "median heuristic over the pooled rows".
struct KernelSpec {
  double bandwidth = 0.0;

  static KernelSpec median() { return {}; }
  static KernelSpec fixed(double sigma);
  bool is_median() const { return !(bandwidth > 0.0); }
};

/// Rows above this count are subsampled (fixed seed) for the median heuristic.
inline constexpr std::size_t kMedianExactRows = 2000;

/// Median pairwise Euclidean distance. Throws Error with fewer than two rows
/// or when every row is identical.
double median_bandwidth(const Matrix& pooled);

/// Bandwidth used inside penalties, where degenerate batches must not abort
/// training: the median heuristic, else the median of the nonzero pairwise
/// distances, else 1.
double robust_bandwidth(const Matrix& pooled);
double robust_bandwidth(const Matrix& a, const Matrix& b);

struct Gradients {
  Matrix a;  ///< d value / d a, same shape as a
  Matrix b;
};

/// Biased (V-statistic) squared MMD. Median policy resolves the bandwidth
/// with robust_bandwidth over a and b pooled.
double mmd2(const Matrix& a, const Matrix& b, const KernelSpec& k);
Gradients grad_mmd2(const Matrix& a, const Matrix& b, const KernelSpec& k);

/// (1/d^2) ||C_a - C_b||_F^2 with unbiased covariances. Needs >= 2 rows each.
double coral(const Matrix& a, const Matrix& b);
Gradients grad_coral(const Matrix& a, const Matrix& b);

/// Sample covariance with 1/(n-1) normalization, d x d.
Matrix covariance(const Matrix& x);

enum class Kind { Mmd, Coral };
const char* to_string(Kind k);
Kind kind_from_string(const std::string& s);

struct Divergence {
  Kind kind = Kind::Mmd;
  KernelSpec kernel;
};

struct Evaluation {
  double value = 0.0;
  Gradients grad;  ///< empty matrices unless requested
};

/// Value and optionally gradients; for MMD the kernel must already carry a
/// fixed bandwidth when called from a penalty that shares one bandwidth.
Evaluation evaluate(const Divergence& div, const Matrix& a, const Matrix& b, bool with_grad);

}  // namespace invrec::divergence
