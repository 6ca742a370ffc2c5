#pragma once

// Predictors f = h ∘ φ over real feature vectors: a linear scorer and a
// ReLU multilayer perceptron. φ is read at the representation tap.
//
// Parameter layout (flat vector): for each affine layer in order, the weight
// matrix W (out x in, row-major) followed by the bias b (out).
//   Linear:          [w (in), b (1)]
//   Mlp(L, h):       in->h, then (L-1) times h->h, then h->1

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invrec/common.hpp"

namespace invrec::model {

enum class Kind { Linear, Mlp };

struct Architecture {
  Kind kind = Kind::Linear;
  std::size_t input_dim = 1;
  std::size_t hidden_layers = 3;
  std::size_t hidden_dim = 32;
  /// Mlp: hidden layer index in [0, hidden_layers) whose ReLU output is φ,
  /// or hidden_layers for the logit. -1 selects the default (last hidden).
  /// Ignored for Linear, whose tap is always the logit.
  int tap = -1;

  static Architecture linear(std::size_t input_dim);
  static Architecture mlp(std::size_t input_dim, std::size_t layers = 3, std::size_t width = 32, int tap = -1);

  std::size_t layer_count() const { return kind == Kind::Linear ? 1 : hidden_layers + 1; }
  std::size_t layer_in(std::size_t k) const;
  std::size_t layer_out(std::size_t k) const;
  std::size_t param_count() const;
  /// Offset of layer k's weight block in the flat vector; its bias follows.
  std::size_t layer_offset(std::size_t k) const;
  /// Resolved tap as a layer index: the representation is the output of
  /// affine layer `tap_layer()` (after ReLU for hidden layers).
  std::size_t tap_layer() const;
  bool tap_is_logit() const { return tap_layer() + 1 == layer_count(); }
  std::size_t tap_dim() const { return layer_out(tap_layer()); }

  bool operator==(const Architecture&) const = default;
};

struct Predictor {
  Architecture arch;
  std::vector<double> params;

  /// Throws ShapeError when params.size() disagrees with the architecture.
  void check() const;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
Predictor init(const Architecture& arch, std::uint64_t seed);

struct ForwardRecord {
  /// activations[k] is the output of layer k (after ReLU for hidden layers);
  /// the last entry holds the single logit.
  std::vector<std::vector<double>> activations;
  double logit = 0.0;
  double probability = 0.5;
  std::size_t tap_layer = 0;

  std::span<const double> representation() const { return activations.at(tap_layer); }
};

ForwardRecord forward(const Predictor& p, std::span<const double> features);

/// Logits for every row of X.
std::vector<double> logits(const Predictor& p, const Matrix& X);
/// Representation at the tap for every row of X (n x tap_dim).
Matrix representations(const Predictor& p, const Matrix& X);

inline constexpr double kProbClamp = 1e-12;
double sigmoid(double z);
/// -[y ln p + (1-y) ln(1-p)] with p clamped to [1e-12, 1-1e-12].
double log_loss(double prob, int y);
double mean_log_loss(const Predictor& p, const Matrix& X, std::span<const int> y);

/// Gradient over θ of the mean log-loss on (X, y) plus, when given, the
/// contribution of per-sample gradients arriving at the representation tap
/// (tap_grad is n x tap_dim and is chain-ruled as-is, without averaging).
std::vector<double> backward(const Predictor& p, const Matrix& X, std::span<const int> y,
                             const Matrix* tap_grad = nullptr);

/// Batched forward returning the representations and mean loss at once, and
/// the matching backward that reuses the cached activations.
struct BatchPass {
  std::vector<Matrix> activations;  ///< per layer, n x layer_out
  Matrix representation;
  double mean_loss = 0.0;
};
BatchPass forward_batch(const Predictor& p, const Matrix& X, std::span<const int> y);
std::vector<double> backward_batch(const Predictor& p, const Matrix& X, std::span<const int> y, const BatchPass& pass,
                                   const Matrix* tap_grad = nullptr);

/// 1 iff logit > 0.
int predict_label(const Predictor& p, std::span<const double> features);
std::vector<int> predict_labels(const Predictor& p, const Matrix& X);

/// Checkpoint text: header line, architecture line, parameter count, then one
/// shortest round-trip decimal per line.
std::string to_checkpoint(const Predictor& p);
Predictor from_checkpoint(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Predictor& p);
Predictor load_checkpoint(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace invrec::model
