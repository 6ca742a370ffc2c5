// JSON echo and override of experiment configurations. update_from_json
// only touches keys present in the document, so partial files override
// defaults.

#include "invrec/experiments.hpp"

namespace invrec::experiments {
namespace {

using report::Json;

template <class T>
void take(const Json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

template <class T, std::size_t N>
void take(const Json& j, const char* key, std::array<T, N>& dst) {
  if (!j.contains(key)) return;
  const auto v = j.at(key).get<std::vector<T>>();
  if (v.size() != N) throw Error(std::string("'") + key + "' needs " + std::to_string(N) + " entries");
  std::copy(v.begin(), v.end(), dst.begin());
}

Json arch_json(const model::Architecture& a) {
  if (a.kind == model::Kind::Linear) return {{"kind", "linear"}};
  return {{"kind", "mlp"}, {"hidden_layers", a.hidden_layers}, {"hidden_dim", a.hidden_dim}, {"tap", a.tap}};
}

void update_arch(model::Architecture& a, const Json& j) {
  if (j.contains("kind")) {
    const auto k = j.at("kind").get<std::string>();
    if (k == "linear") {
      a.kind = model::Kind::Linear;
    } else if (k == "mlp") {
      a.kind = model::Kind::Mlp;
    } else {
      throw Error("unknown model kind '" + k + "'");
    }
  }
  take(j, "hidden_layers", a.hidden_layers);
  take(j, "hidden_dim", a.hidden_dim);
  take(j, "tap", a.tap);
}

Json lambda_json(const trainer::LambdaSchedule& s) {
  if (s.type == trainer::LambdaSchedule::Type::Constant) return {{"type", "constant"}, {"value", s.lambda1}};
  return {{"type", "two_phase"}, {"first", s.lambda1}, {"first_epochs", s.epochs1}, {"then", s.lambda2}};
}

void update_lambda(trainer::LambdaSchedule& s, const Json& j) {
  if (j.is_number()) {
    s = trainer::LambdaSchedule::constant(j.get<double>());
    return;
  }
  const auto type = j.value("type", std::string("constant"));
  if (type == "constant") {
    s = trainer::LambdaSchedule::constant(j.value("value", s.lambda1));
  } else if (type == "two_phase") {
    s = trainer::LambdaSchedule::two_phase(j.value("first", s.lambda1), j.value("first_epochs", s.epochs1),
                                           j.value("then", s.lambda2));
  } else {
    throw Error("unknown lambda schedule '" + type + "'");
  }
}

}  // namespace

Json to_json(const trainer::TrainConfig& c) {
  Json opt = {{"kind", c.optimizer.kind == trainer::OptimizerConfig::Kind::Adam ? "adam" : "sgd"}};
  if (c.optimizer.kind == trainer::OptimizerConfig::Kind::Adam) {
    opt["beta1"] = c.optimizer.beta1;
    opt["beta2"] = c.optimizer.beta2;
    opt["eps"] = c.optimizer.eps;
  }
  Json div = {{"kind", divergence::to_string(c.divergence.kind)}};
  if (c.divergence.kind == divergence::Kind::Mmd) {
    if (c.divergence.kernel.is_median()) {
      div["bandwidth"] = "median";
    } else {
      div["bandwidth"] = c.divergence.kernel.bandwidth;
    }
  }
  return {{"penalty", trainer::to_string(c.penalty)},
          {"divergence", div},
          {"lambda", lambda_json(c.lambda)},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"min_cell", c.min_cell},
          {"seed", c.seed},
          {"optimizer", opt},
          {"model", arch_json(c.architecture)}};
}

void update_from_json(trainer::TrainConfig& c, const Json& j) {
  if (j.contains("penalty")) c.penalty = trainer::penalty_from_string(j.at("penalty").get<std::string>());
  if (j.contains("divergence")) {
    const auto& d = j.at("divergence");
    if (d.is_string()) {
      c.divergence.kind = divergence::kind_from_string(d.get<std::string>());
    } else {
      if (d.contains("kind")) c.divergence.kind = divergence::kind_from_string(d.at("kind").get<std::string>());
      if (d.contains("bandwidth")) {
        const auto& b = d.at("bandwidth");
        c.divergence.kernel = b.is_string() && b.get<std::string>() == "median" ? divergence::KernelSpec::median()
                                                                               : divergence::KernelSpec::fixed(b.get<double>());
      }
    }
  }
  if (j.contains("lambda")) update_lambda(c.lambda, j.at("lambda"));
  take(j, "learning_rate", c.learning_rate);
  take(j, "epochs", c.epochs);
  take(j, "batch_size", c.batch_size);
  take(j, "min_cell", c.min_cell);
  take(j, "seed", c.seed);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    const auto kind = o.is_string() ? o.get<std::string>() : o.value("kind", std::string("sgd"));
    if (kind == "sgd") {
      c.optimizer.kind = trainer::OptimizerConfig::Kind::Sgd;
    } else if (kind == "adam") {
      c.optimizer.kind = trainer::OptimizerConfig::Kind::Adam;
    } else {
      throw Error("unknown optimizer '" + kind + "'");
    }
    if (o.is_object()) {
      take(o, "beta1", c.optimizer.beta1);
      take(o, "beta2", c.optimizer.beta2);
      take(o, "eps", c.optimizer.eps);
    }
  }
  if (j.contains("model")) update_arch(c.architecture, j.at("model"));
  c.check();
}

Json to_json(const SubclassParams& p) {
  return {{"q_e", p.q_e}, {"p_xac", p.p_xac}, {"p_y_given_e", p.p_y_given_e},
          {"p_r", p.p_r}, {"copy_r", p.copy_r}, {"n_per_env", p.n_per_env}};
}

void update_from_json(SubclassParams& p, const Json& j) {
  take(j, "q_e", p.q_e);
  take(j, "p_xac", p.p_xac);
  take(j, "p_y_given_e", p.p_y_given_e);
  take(j, "p_r", p.p_r);
  take(j, "copy_r", p.copy_r);
  take(j, "n_per_env", p.n_per_env);
  p.check();
}

Json to_json(const SweepParams& p) {
  return {{"means", p.means},         {"offsets", p.offsets}, {"test_correlation", p.test_correlation},
          {"base_accuracy", p.base_accuracy}, {"noise_dims", p.noise_dims}, {"pixels", p.pixels},
          {"n_per_env", p.n_per_env}, {"n_test", p.n_test}};
}

void update_from_json(SweepParams& p, const Json& j) {
  take(j, "means", p.means);
  take(j, "offsets", p.offsets);
  take(j, "test_correlation", p.test_correlation);
  take(j, "base_accuracy", p.base_accuracy);
  take(j, "noise_dims", p.noise_dims);
  take(j, "pixels", p.pixels);
  take(j, "n_per_env", p.n_per_env);
  take(j, "n_test", p.n_test);
  p.check();
}

Json to_json(const Table1Config& c) {
  return {{"data", to_json(c.data)},
          {"labels", {{"XspToR", c.labels.xsp_to_r}, {"RToXsp", c.labels.r_to_xsp}}},
          {"train", to_json(c.train)},
          {"penalty", trainer::to_string(c.penalty)},
          {"lambda", c.lambda},
          {"replicates", c.replicates}};
}

void update_from_json(Table1Config& c, const Json& j) {
  if (j.contains("data")) update_from_json(c.data, j.at("data"));
  if (j.contains("labels")) {
    take(j.at("labels"), "XspToR", c.labels.xsp_to_r);
    take(j.at("labels"), "RToXsp", c.labels.r_to_xsp);
  }
  if (j.contains("train")) update_from_json(c.train, j.at("train"));
  if (j.contains("penalty")) c.penalty = trainer::penalty_from_string(j.at("penalty").get<std::string>());
  take(j, "lambda", c.lambda);
  take(j, "replicates", c.replicates);
  if (c.replicates < 1) throw Error("replicates must be at least 1");
  if (!(c.lambda >= 0.0)) throw Error("lambda must be nonnegative");
}

Json to_json(const SweepConfig& c) {
  return {{"data", to_json(c.data)},
          {"conditional", to_json(c.conditional)},
          {"marginal", to_json(c.marginal)},
          {"none", to_json(c.none)}};
}

void update_from_json(SweepConfig& c, const Json& j) {
  if (j.contains("data")) update_from_json(c.data, j.at("data"));
  // "train" applies to all three configurations before the specific blocks
  if (j.contains("train")) {
    for (auto* t : {&c.conditional, &c.marginal, &c.none}) update_from_json(*t, j.at("train"));
  }
  if (j.contains("conditional")) update_from_json(c.conditional, j.at("conditional"));
  if (j.contains("marginal")) update_from_json(c.marginal, j.at("marginal"));
  if (j.contains("none")) update_from_json(c.none, j.at("none"));
}

Json to_json(const MixtureConfig& c) { return {{"base", to_json(c.base)}, {"alphas", c.alphas}}; }

void update_from_json(MixtureConfig& c, const Json& j) {
  if (j.contains("base")) update_from_json(c.base, j.at("base"));
  take(j, "alphas", c.alphas);
}

Json to_json(const InvarianceCheckConfig& c) {
  return {{"base", to_json(c.base)},
          {"replicates", c.replicates},
          {"n_heldout", c.n_heldout},
          {"permutations", c.permutations}};
}

void update_from_json(InvarianceCheckConfig& c, const Json& j) {
  if (j.contains("base")) update_from_json(c.base, j.at("base"));
  take(j, "replicates", c.replicates);
  take(j, "n_heldout", c.n_heldout);
  take(j, "permutations", c.permutations);
}

}  // namespace invrec::experiments
