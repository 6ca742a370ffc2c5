// invrec command-line front end. Exit codes: 0 success, 1 domain failure
// (validation, failed check, shape mismatch), 2 usage or IO failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "invrec/dataset.hpp"
#include "invrec/experiments.hpp"
#include "invrec/gradcheck.hpp"
#include "invrec/model.hpp"
#include "invrec/scm.hpp"
#include "invrec/scm_io.hpp"
#include "invrec/trainer.hpp"

namespace fs = std::filesystem;
using namespace invrec;
using report::Json;

namespace {

constexpr int kOk = 0;
constexpr int kDomain = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw UsageError("cannot read '" + path + "': no such file");
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read '" + path + "'");
}

void require_writable_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw UsageError("output directory '" + dir + "' cannot be created");
}

Json read_json_file(const std::string& path) {
  require_file(path);
  std::ifstream f(path);
  try {
    return Json::parse(f);
  } catch (const Json::exception& e) {
    throw UsageError("cannot parse '" + path + "': " + e.what());
  }
}

std::uint64_t parse_seed(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos, 0);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw UsageError(std::string("invalid ") + what + " '" + s + "'");
  return v;
}

struct Common {
  std::string config;
  std::string seed_text;
  std::string out;
  int jobs = 0;
  std::optional<double> lambda;
  std::string penalty;
  std::string divergence;

  std::uint64_t seed() const {
    if (!seed_text.empty()) return parse_seed(seed_text, "--seed");
    if (const char* env = std::getenv("INVREC_SEED"); env && *env) return parse_seed(env, "INVREC_SEED");
    return 0;
  }
};

void add_overrides(CLI::App* cmd, Common& c) {
  cmd->add_option("--lambda", c.lambda, "Penalty weight")->check(CLI::NonNegativeNumber);
  cmd->add_option("--penalty", c.penalty, "none|marginal|conditional")
      ->check(CLI::IsMember({"none", "marginal", "conditional"}));
  cmd->add_option("--divergence", c.divergence, "mmd|coral")->check(CLI::IsMember({"mmd", "coral"}));
}

void apply_overrides(trainer::TrainConfig& t, const Common& c) {
  if (!c.penalty.empty()) t.penalty = trainer::penalty_from_string(c.penalty);
  if (!c.divergence.empty()) t.divergence.kind = divergence::kind_from_string(c.divergence);
  if (c.lambda) t.lambda = trainer::LambdaSchedule::constant(*c.lambda);
}

void apply_overrides(experiments::Table1Config& t, const Common& c) {
  if (!c.penalty.empty()) t.penalty = trainer::penalty_from_string(c.penalty);
  if (!c.divergence.empty()) t.train.divergence.kind = divergence::kind_from_string(c.divergence);
  if (c.lambda) t.lambda = *c.lambda;
}

scm::DiscreteScm default_model(const std::string& graph) {
  const experiments::SubclassParams params;
  const experiments::SubclassLabels labels;
  if (graph == "XspToR" || graph == labels.xsp_to_r) return experiments::subclass_model(params, scm::GraphTag::XspToR);
  if (graph == "RToXsp" || graph == labels.r_to_xsp) return experiments::subclass_model(params, scm::GraphTag::RToXsp);
  throw UsageError("unknown graph '" + graph + "'");
}

// ------------------------------------------------------------------ verbs

int cmd_validate(const std::string& path, bool echo) {
  require_file(path);
  const auto m = scm::load_model(path);
  const auto violations = scm::validate(m);
  for (const auto& v : violations) std::cout << v << '\n';
  if (!violations.empty()) return kDomain;
  if (echo) {
    std::cout << scm::dump_model(m);
  } else {
    std::cout << "ok: " << m.variables.size() << " variables, " << m.env_count() << " environments\n";
  }
  return kOk;
}

int cmd_gen(const std::string& model_path, const std::string& graph, std::size_t n, const std::string& envs_text,
            std::uint64_t seed, const std::string& out) {
  scm::DiscreteScm m;
  if (!model_path.empty()) {
    require_file(model_path);
    m = scm::load_model(model_path);
  } else {
    m = default_model(graph);
  }
  scm::require_valid(m);
  std::vector<int> envs;
  if (envs_text.empty()) {
    for (int e = 0; e < m.env_count(); ++e) envs.push_back(e);
  } else {
    std::stringstream ss(envs_text);
    std::string tok;
    while (std::getline(ss, tok, ',')) envs.push_back(static_cast<int>(parse_seed(tok, "environment")));
  }
  Dataset data;
  for (int e : envs) {
    if (e < 0 || e >= m.env_count()) throw ValidationError("environment " + std::to_string(e) + " out of range");
    data.append(scm::sample(m, e, n, derive_seed(seed, {static_cast<std::uint64_t>(e)})));
  }
  if (out.empty()) {
    write_csv(std::cout, data);
  } else {
    std::ofstream f(out);
    if (!f) throw UsageError("cannot write '" + out + "'");
    write_csv(f, data);
    std::cout << "wrote " << data.rows() << " rows to " << out << '\n';
  }
  return kOk;
}

int cmd_train(const Common& c, const std::string& data_path, const std::string& history_path, bool with_user) {
  require_file(data_path);
  if (c.out.empty()) throw UsageError("train needs --out for the checkpoint");
  trainer::TrainConfig cfg = experiments::default_table1_config().train;
  if (!c.config.empty()) {
    const Json j = read_json_file(c.config);
    experiments::update_from_json(cfg, j.contains("train") ? j.at("train") : j);
  }
  apply_overrides(cfg, c);
  cfg.seed = c.seed();
  const Dataset data = read_csv(data_path);
  const auto envs = trainer::split_by_environment(data, with_user);
  const auto res = trainer::train(cfg, envs);
  model::save_checkpoint(c.out, res.predictor);
  if (!history_path.empty()) {
    std::ofstream f(history_path);
    if (!f) throw UsageError("cannot write '" + history_path + "'");
    res.history.write_csv(f);
  }
  const auto m = experiments::evaluate(res.predictor, envs);
  std::cout << "final loss " << report::fixed6(res.history.loss.back()) << " penalty "
            << report::fixed6(res.history.penalty.back()) << " train accuracy " << report::fixed6(m.accuracy) << '\n';
  if (res.skips.skipped) std::cout << "skipped penalty cells: " << res.skips.skipped << '\n';
  return kOk;
}

model::Predictor load_predictor(const std::string& path) {
  require_file(path);
  return model::load_checkpoint(path);
}

void check_width(const model::Predictor& p, const std::vector<trainer::EnvBatch>& envs) {
  for (const auto& b : envs) {
    if (b.X.cols() != p.arch.input_dim) {
      throw ShapeError("data has " + std::to_string(b.X.cols()) + " feature columns but the model expects " +
                       std::to_string(p.arch.input_dim));
    }
  }
}

int cmd_eval(const std::string& model_path, const std::string& data_path, bool with_user) {
  const auto p = load_predictor(model_path);
  require_file(data_path);
  const auto envs = trainer::split_by_environment(read_csv(data_path), with_user);
  check_width(p, envs);
  const auto m = experiments::evaluate(p, envs);
  std::cout << "accuracy " << report::fixed6(m.accuracy) << " n " << m.n << '\n';
  for (const auto& [e, acc] : m.per_env) std::cout << "env " << e << " accuracy " << report::fixed6(acc) << '\n';
  return kOk;
}

int cmd_verify(const std::string& model_path, const std::string& data_path, const std::string& mode, int perms,
               double alpha, std::uint64_t seed, bool with_user) {
  const auto p = load_predictor(model_path);
  require_file(data_path);
  const auto envs = trainer::split_by_environment(read_csv(data_path), with_user);
  check_width(p, envs);
  const auto t = trainer::verify_invariance(p, envs, trainer::penalty_from_string(mode), perms, seed);
  std::cout << "statistic " << report::fixed6(t.statistic) << " p_value " << report::fixed6(t.p_value) << '\n';
  const bool rejected = t.p_value < alpha;
  std::cout << (rejected ? "invariance rejected" : "invariance not rejected") << " at alpha " << alpha << '\n';
  return rejected ? kDomain : kOk;
}

int cmd_gradcheck(std::uint64_t seed, bool broken) {
  const auto rep = gradcheck::run_all(seed, broken);
  const auto& w = rep.worst();
  std::cout << rep.cases.size() << " cases, worst relative error " << w.rel_error << " (" << w.suite << "/" << w.name
            << ")\n";
  return rep.passed() ? kOk : kDomain;
}

void finish(const report::ExperimentReport& rep, const std::string& dir) {
  for (const auto& path : rep.write(dir)) std::cout << "wrote " << path.string() << '\n';
  std::cout << rep.summary.dump(2) << '\n';
}

int cmd_reproduce(const std::string& which, const Common& c) {
  const std::string dir = c.out.empty() ? "." : c.out;
  require_writable_dir(dir);
  const Json j = c.config.empty() ? Json::object() : read_json_file(c.config);
  const auto seed = c.seed();
  if (which == "table1") {
    auto cfg = experiments::default_table1_config();
    experiments::update_from_json(cfg, j);
    apply_overrides(cfg, c);
    finish(experiments::run_table1(cfg, seed, c.jobs), dir);
  } else if (which == "sweep") {
    auto cfg = experiments::default_sweep_config();
    experiments::update_from_json(cfg, j);
    if (!c.divergence.empty()) {
      for (auto* t : {&cfg.conditional, &cfg.marginal, &cfg.none}) t->divergence.kind = divergence::kind_from_string(c.divergence);
    }
    if (c.lambda) {
      cfg.conditional.lambda = trainer::LambdaSchedule::constant(*c.lambda);
      cfg.marginal.lambda = trainer::LambdaSchedule::constant(*c.lambda);
    }
    if (!c.penalty.empty()) std::cerr << "note: --penalty is ignored by the sweep (it runs all three)\n";
    finish(experiments::run_sweep(cfg, seed, c.jobs), dir);
  } else if (which == "mixture") {
    auto cfg = experiments::default_mixture_config();
    experiments::update_from_json(cfg, j);
    apply_overrides(cfg.base, c);
    finish(experiments::run_mixture(cfg, seed, c.jobs), dir);
  } else if (which == "invariance") {
    auto cfg = experiments::default_invariance_check_config();
    experiments::update_from_json(cfg, j);
    apply_overrides(cfg.base, c);
    finish(experiments::run_invariance_check(cfg, seed, c.jobs), dir);
  } else {
    experiments::SubclassParams params;
    experiments::update_from_json(params, j.contains("data") ? j.at("data") : j);
    const auto rep = experiments::run_reorientation(params, seed);
    finish(rep, dir);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"invrec: invariant relevance prediction experiments"};
  app.require_subcommand(1);
  Common c;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", c.seed_text, "Master seed (falls back to INVREC_SEED, then 0)");
  };

  std::string model_path, data_path, graph = "XspToR", envs_text, history, mode = "conditional";
  bool echo = false, broken = false, with_user = false;
  std::size_t n = 1000;
  int perms = 1000;
  double alpha = 0.05;

  auto* validate = app.add_subcommand("validate", "Check a model file and list violations");
  validate->add_option("model", model_path, "Model file")->required();
  validate->add_flag("--echo", echo, "Print the canonical form when valid");

  auto* gen = app.add_subcommand("gen", "Sample a dataset from a model");
  gen->add_option("--model", model_path, "Model file (default: built-in subclass model)");
  gen->add_option("--graph", graph, "Built-in model orientation: XspToR|RToXsp");
  gen->add_option("-n,--rows", n, "Rows per environment")->check(CLI::PositiveNumber);
  gen->add_option("--envs", envs_text, "Comma-separated environments (default: all)");
  gen->add_option("--out", c.out, "Output CSV (default: stdout)");
  add_seed(gen);

  auto* train = app.add_subcommand("train", "Train a predictor on a dataset");
  train->add_option("--data", data_path, "Dataset CSV")->required();
  train->add_option("--config", c.config, "JSON training configuration");
  train->add_option("--out", c.out, "Checkpoint path")->required();
  train->add_option("--history", history, "Write per-epoch history CSV");
  train->add_flag("--with-user", with_user, "Use u* columns as features");
  add_seed(train);
  add_overrides(train, c);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--model", model_path, "Checkpoint")->required();
  eval->add_option("--data", data_path, "Dataset CSV")->required();
  eval->add_flag("--with-user", with_user, "Use u* columns as features");

  auto* verify = app.add_subcommand("verify", "Permutation test of invariance on held-out data");
  verify->add_option("--model", model_path, "Checkpoint")->required();
  verify->add_option("--data", data_path, "Dataset CSV")->required();
  verify->add_option("--mode", mode, "marginal|conditional")->check(CLI::IsMember({"marginal", "conditional"}));
  verify->add_option("--permutations", perms, "Permutation count")->check(CLI::PositiveNumber);
  verify->add_option("--alpha", alpha, "Rejection level")->check(CLI::Range(0.0, 1.0));
  verify->add_flag("--with-user", with_user, "Use u* columns as features");
  add_seed(verify);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  grad->add_flag("--break-gradients", broken, "Perturb analytic gradients (checker self-test)");
  add_seed(grad);

  auto* repro = app.add_subcommand("reproduce", "Run an experiment and write its report");
  std::string which;
  repro->add_option("experiment", which, "table1|sweep|mixture|appendixA|invariance")
      ->required()
      ->check(CLI::IsMember({"table1", "sweep", "mixture", "appendixA", "invariance"}));
  repro->add_option("--config", c.config, "JSON experiment configuration");
  repro->add_option("--out", c.out, "Report directory (default: .)");
  repro->add_option("--jobs", c.jobs, "Worker threads (default: available processors)");
  add_seed(repro);
  add_overrides(repro, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) return cmd_validate(model_path, echo);
    if (*gen) return cmd_gen(model_path, graph, n, envs_text, c.seed(), c.out);
    if (*train) return cmd_train(c, data_path, history, with_user);
    if (*eval) return cmd_eval(model_path, data_path, with_user);
    if (*verify) return cmd_verify(model_path, data_path, mode, perms, alpha, c.seed(), with_user);
    if (*grad) return cmd_gradcheck(c.seed(), broken);
    if (*repro) return cmd_reproduce(which, c);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kDomain;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
