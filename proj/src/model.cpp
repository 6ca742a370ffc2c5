#include "invrec/model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "invrec/kernels.hpp"

namespace invrec::model {

Architecture Architecture::linear(std::size_t input_dim) {
  Architecture a;
  a.kind = Kind::Linear;
  a.input_dim = input_dim;
  return a;
}

Architecture Architecture::mlp(std::size_t input_dim, std::size_t layers, std::size_t width, int tap) {
  Architecture a;
  a.kind = Kind::Mlp;
  a.input_dim = input_dim;
  a.hidden_layers = layers;
  a.hidden_dim = width;
  a.tap = tap;
  return a;
}

std::size_t Architecture::layer_in(std::size_t k) const { return k == 0 ? input_dim : hidden_dim; }

std::size_t Architecture::layer_out(std::size_t k) const { return k + 1 == layer_count() ? 1 : hidden_dim; }

std::size_t Architecture::layer_offset(std::size_t k) const {
  std::size_t off = 0;
  for (std::size_t j = 0; j < k; ++j) off += layer_out(j) * (layer_in(j) + 1);
  return off;
}

std::size_t Architecture::param_count() const { return layer_offset(layer_count()); }

std::size_t Architecture::tap_layer() const {
  if (kind == Kind::Linear) return 0;
  if (tap < 0) return hidden_layers - 1;
  if (static_cast<std::size_t>(tap) > hidden_layers) throw Error("representation tap beyond the logit layer");
  return static_cast<std::size_t>(tap);
}

void Predictor::check() const {
  if (arch.input_dim == 0) throw ShapeError("input dimension must be at least 1");
  if (arch.kind == Kind::Mlp && (arch.hidden_layers == 0 || arch.hidden_dim == 0)) {
    throw ShapeError("mlp needs at least one hidden layer of positive width");
  }
  if (params.size() != arch.param_count()) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, architecture needs " +
                     std::to_string(arch.param_count()));
  }
}

Predictor init(const Architecture& arch, std::uint64_t seed) {
  Predictor p{arch, std::vector<double>(arch.param_count(), 0.0)};
  p.check();
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < arch.layer_count(); ++k) {
    const std::size_t in = arch.layer_in(k), out = arch.layer_out(k);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    double* w = p.params.data() + arch.layer_offset(k);
    for (std::size_t i = 0; i < in * out; ++i) w[i] = bound * (2.0 * to_unit(rng()) - 1.0);
  }
  return p;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_loss(double prob, int y) {
  const double p = std::min(1.0 - kProbClamp, std::max(kProbClamp, prob));
  return y ? -std::log(p) : -std::log(1.0 - p);
}

namespace {

void require_input(const Predictor& p, std::size_t cols) {
  if (cols != p.arch.input_dim) {
    throw ShapeError("feature width " + std::to_string(cols) + " does not match model input dimension " +
                     std::to_string(p.arch.input_dim));
  }
}

void layer_forward(const Predictor& p, std::size_t k, const double* in, double* out) {
  const auto& a = p.arch;
  const std::size_t rows = a.layer_out(k), cols = a.layer_in(k);
  const double* W = p.params.data() + a.layer_offset(k);
  kernels::gemv(W, in, W + rows * cols, out, rows, cols);
  if (k + 1 < a.layer_count()) {
    for (std::size_t j = 0; j < rows; ++j) out[j] = out[j] > 0.0 ? out[j] : 0.0;
  }
}

}  // namespace

ForwardRecord forward(const Predictor& p, std::span<const double> features) {
  p.check();
  require_input(p, features.size());
  ForwardRecord rec;
  const auto& a = p.arch;
  const double* in = features.data();
  for (std::size_t k = 0; k < a.layer_count(); ++k) {
    rec.activations.emplace_back(a.layer_out(k));
    layer_forward(p, k, in, rec.activations.back().data());
    in = rec.activations.back().data();
  }
  rec.logit = rec.activations.back()[0];
  rec.probability = sigmoid(rec.logit);
  rec.tap_layer = a.tap_layer();
  return rec;
}

BatchPass forward_batch(const Predictor& p, const Matrix& X, std::span<const int> y) {
  p.check();
  require_input(p, X.cols());
  if (!y.empty() && y.size() != X.rows()) throw ShapeError("label count does not match batch size");
  const auto& a = p.arch;
  BatchPass pass;
  const std::size_t n = X.rows();
  for (std::size_t k = 0; k < a.layer_count(); ++k) {
    Matrix out(n, a.layer_out(k));
    const Matrix& in = k == 0 ? X : pass.activations.back();
    for (std::size_t i = 0; i < n; ++i) layer_forward(p, k, in.row(i).data(), out.row(i).data());
    pass.activations.push_back(std::move(out));
  }
  pass.representation = pass.activations[a.tap_layer()];
  if (!y.empty()) {
    double s = 0.0;
    const Matrix& z = pass.activations.back();
    for (std::size_t i = 0; i < n; ++i) s += log_loss(sigmoid(z(i, 0)), y[i]);
    pass.mean_loss = n ? s / static_cast<double>(n) : 0.0;
  }
  return pass;
}

std::vector<double> backward_batch(const Predictor& p, const Matrix& X, std::span<const int> y, const BatchPass& pass,
                                   const Matrix* tap_grad) {
  const auto& a = p.arch;
  const std::size_t n = X.rows();
  if (y.size() != n) throw ShapeError("label count does not match batch size");
  const std::size_t tap = a.tap_layer();
  if (tap_grad && (tap_grad->rows() != n || tap_grad->cols() != a.tap_dim())) {
    throw ShapeError("tap gradient is " + std::to_string(tap_grad->rows()) + "x" + std::to_string(tap_grad->cols()) +
                     ", expected " + std::to_string(n) + "x" + std::to_string(a.tap_dim()));
  }
  std::vector<double> grad(a.param_count(), 0.0);
  const std::size_t L = a.layer_count();
  // g: gradient w.r.t. the pre-activation of the current layer, one row per sample
  Matrix g(n, 1);
  const Matrix& z = pass.activations.back();
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) g(i, 0) = (sigmoid(z(i, 0)) - y[i]) * inv_n;
  if (tap_grad && tap == L - 1) {
    for (std::size_t i = 0; i < n; ++i) g(i, 0) += (*tap_grad)(i, 0);
  }
  for (std::size_t k = L; k-- > 0;) {
    const std::size_t rows = a.layer_out(k), cols = a.layer_in(k);
    const Matrix& in = k == 0 ? X : pass.activations[k - 1];
    double* gW = grad.data() + a.layer_offset(k);
    double* gb = gW + rows * cols;
    for (std::size_t i = 0; i < n; ++i) {
      kernels::rank1(1.0, g.row(i).data(), in.row(i).data(), gW, rows, cols);
      kernels::axpy(1.0, g.row(i).data(), gb, rows);
    }
    if (k == 0) break;
    const double* W = p.params.data() + a.layer_offset(k);
    Matrix prev(n, cols);
    for (std::size_t i = 0; i < n; ++i) kernels::gemv_t(W, g.row(i).data(), prev.row(i).data(), rows, cols);
    if (tap_grad && tap == k - 1) {
      for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0, tap_grad->row(i).data(), prev.row(i).data(), cols);
    }
    const Matrix& act = pass.activations[k - 1];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        if (!(act(i, j) > 0.0)) prev(i, j) = 0.0;
      }
    }
    g = std::move(prev);
  }
  return grad;
}

std::vector<double> backward(const Predictor& p, const Matrix& X, std::span<const int> y, const Matrix* tap_grad) {
  if (y.size() != X.rows()) throw ShapeError("label count does not match batch size");
  const BatchPass pass = forward_batch(p, X, y);
  return backward_batch(p, X, y, pass, tap_grad);
}

std::vector<double> logits(const Predictor& p, const Matrix& X) {
  const BatchPass pass = forward_batch(p, X, {});
  const Matrix& z = pass.activations.back();
  return std::vector<double>(z.values().begin(), z.values().end());
}

Matrix representations(const Predictor& p, const Matrix& X) { return forward_batch(p, X, {}).representation; }

double mean_log_loss(const Predictor& p, const Matrix& X, std::span<const int> y) {
  if (y.size() != X.rows()) throw ShapeError("label count does not match batch size");
  return forward_batch(p, X, y).mean_loss;
}

int predict_label(const Predictor& p, std::span<const double> features) { return forward(p, features).logit > 0.0 ? 1 : 0; }

std::vector<int> predict_labels(const Predictor& p, const Matrix& X) {
  const auto z = logits(p, X);
  std::vector<int> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] > 0.0 ? 1 : 0;
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string to_checkpoint(const Predictor& p) {
  p.check();
  std::ostringstream os;
  const auto& a = p.arch;
  os << "invrec-checkpoint v1\n";
  if (a.kind == Kind::Linear) {
    os << "linear input " << a.input_dim << '\n';
  } else {
    os << "mlp input " << a.input_dim << " hidden " << a.hidden_layers << 'x' << a.hidden_dim << " tap " << a.tap_layer() << '\n';
  }
  os << "params " << p.params.size() << '\n';
  for (double v : p.params) os << format_double(v) << '\n';
  return os.str();
}

Predictor from_checkpoint(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "invrec-checkpoint v1") throw Error("not a checkpoint (bad header)");
  Predictor p;
  std::string kind, word;
  if (!std::getline(is, line)) throw Error("checkpoint truncated: missing architecture");
  {
    std::istringstream as(line);
    as >> kind >> word >> p.arch.input_dim;
    if (!as || word != "input") throw Error("malformed architecture line: " + line);
    if (kind == "linear") {
      p.arch.kind = Kind::Linear;
    } else if (kind == "mlp") {
      p.arch.kind = Kind::Mlp;
      char x = 0;
      int tap = -1;
      as >> word >> p.arch.hidden_layers >> x >> p.arch.hidden_dim;
      if (!as || word != "hidden" || x != 'x') throw Error("malformed architecture line: " + line);
      if (as >> word >> tap && word == "tap") p.arch.tap = tap;
    } else {
      throw Error("unknown model kind '" + kind + "'");
    }
  }
  std::size_t count = 0;
  if (!std::getline(is, line) || std::sscanf(line.c_str(), "params %zu", &count) != 1) throw Error("checkpoint missing params count");
  p.params.reserve(count);
  while (p.params.size() < count && std::getline(is, line)) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size()) throw Error("bad parameter value '" + line + "'");
    p.params.push_back(v);
  }
  if (p.params.size() != count) throw Error("checkpoint truncated: expected " + std::to_string(count) + " parameters");
  p.check();
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const Predictor& p) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  f << to_checkpoint(p);
}

Predictor load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_checkpoint(ss.str());
}

}  // namespace invrec::model
