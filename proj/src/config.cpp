#include "igauss/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace igauss {

namespace {

void check_keys(const Json& obj, const std::string& ctx, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(ctx + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
  }
}

std::string path(const std::string& ctx, const char* key) { return ctx.empty() ? key : ctx + "." + key; }

void read(const Json& obj, const std::string& ctx, const char* key, double& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(path(ctx, key) + ": expected a number");
  out = v.get<double>();
}

template <class Int>
  requires std::is_integral_v<Int>
void read(const Json& obj, const std::string& ctx, const char* key, Int& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(path(ctx, key) + ": expected an integer");
  if constexpr (std::is_unsigned_v<Int>) {
    if (!v.is_number_unsigned()) throw ConfigError(path(ctx, key) + ": expected a non-negative integer");
    out = static_cast<Int>(v.get<std::uint64_t>());
  } else {
    out = static_cast<Int>(v.get<std::int64_t>());
  }
}

void read(const Json& obj, const std::string& ctx, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(path(ctx, key) + ": expected a boolean");
  out = v.get<bool>();
}

void read(const Json& obj, const std::string& ctx, const char* key, std::string& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError(path(ctx, key) + ": expected a string");
  out = v.get<std::string>();
}

template <class T>
void read_list(const Json& obj, const std::string& ctx, const char* key, std::vector<T>& out) {
  if (!obj.contains(key)) return;
  const Json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(path(ctx, key) + ": expected an array");
  std::vector<T> vals;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Json wrapper = Json::object();
    wrapper["item"] = v[i];
    T item{};
    read(wrapper, path(ctx, key) + "[" + std::to_string(i) + "]", "item", item);
    vals.push_back(item);
  }
  out = std::move(vals);
}

Vector read_vector(const Json& v, const std::string& ctx) {
  if (!v.is_array()) throw ConfigError(ctx + ": expected an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(ctx + ": expected an array of numbers");
    out(static_cast<Eigen::Index>(i)) = v[i].get<double>();
  }
  return out;
}

Matrix read_matrix(const Json& v, const std::string& ctx) {
  if (!v.is_array() || v.empty()) throw ConfigError(ctx + ": expected a non-empty array of rows");
  const Vector first = read_vector(v[0], ctx);
  Matrix out(static_cast<Eigen::Index>(v.size()), first.size());
  for (std::size_t r = 0; r < v.size(); ++r) {
    const Vector row = read_vector(v[r], ctx);
    if (row.size() != first.size()) throw ConfigError(ctx + ": ragged rows");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

Json plain_vector(const Vector& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Json plain_matrix(const Matrix& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(plain_vector(m.row(r).transpose()));
  return j;
}

void read_data_options(const Json& j, const std::string& ctx, LogisticDataOptions& d) {
  read(j, ctx, "n", d.n);
  read(j, ctx, "d", d.d);
  read(j, ctx, "prior_sigma", d.prior_sigma);
  read(j, ctx, "covariate_eig_lo", d.covariate_eig_lo);
  read(j, ctx, "covariate_eig_hi", d.covariate_eig_hi);
}

void write_data_options(Json& j, const LogisticDataOptions& d) {
  j["n"] = d.n;
  j["d"] = d.d;
  j["prior_sigma"] = d.prior_sigma;
  j["covariate_eig_lo"] = d.covariate_eig_lo;
  j["covariate_eig_hi"] = d.covariate_eig_hi;
}

void validate_data_options(const LogisticDataOptions& d, const std::string& ctx) {
  if (d.n < 1) throw ConfigError(ctx + ".n must be >= 1");
  if (d.d < 1) throw ConfigError(ctx + ".d must be >= 1");
  if (!(d.prior_sigma > 0)) throw ConfigError(ctx + ".prior_sigma must be positive");
  if (!(d.covariate_eig_lo > 0) || !(d.covariate_eig_hi >= d.covariate_eig_lo))
    throw ConfigError(ctx + ": covariate eigenvalue range must satisfy 0 < lo <= hi");
}

}  // namespace

std::string TargetSpec::kind_name(Kind k) {
  switch (k) {
    case Kind::gaussian:
      return "gaussian";
    case Kind::logistic:
      return "logistic";
    case Kind::oracle:
      return "oracle";
  }
  return "unknown";
}

std::string RunConfig::experiment_name(Experiment e) {
  switch (e) {
    case Experiment::gaussian_sweep:
      return "gaussian_sweep";
    case Experiment::logistic:
      return "logistic";
    case Experiment::custom:
      return "custom";
  }
  return "unknown";
}

Json target_spec_to_json(const TargetSpec& t) {
  Json j = Json::object();
  j["kind"] = TargetSpec::kind_name(t.kind);
  switch (t.kind) {
    case TargetSpec::Kind::gaussian:
      if (t.covariance) {
        j["mean"] = plain_vector(t.mean ? *t.mean : Vector::Zero(t.covariance->rows()));
        j["covariance"] = plain_matrix(*t.covariance);
      } else {
        j["dim"] = t.dim;
        j["kappa"] = t.kappa;
      }
      break;
    case TargetSpec::Kind::logistic:
      if (t.design) {
        j["design"] = plain_matrix(*t.design);
        j["labels"] = plain_vector(*t.labels);
        j["prior_sigma"] = t.data.prior_sigma;
      } else {
        write_data_options(j, t.data);
      }
      break;
    case TargetSpec::Kind::oracle:
      j["dim"] = t.dim;
      j["command"] = t.command;
      break;
  }
  return j;
}

TargetSpec target_spec_from_json(const Json& j) {
  const std::string ctx = "target";
  if (!j.is_object()) throw ConfigError("target: expected an object");
  std::string kind = "gaussian";
  read(j, ctx, "kind", kind);
  TargetSpec t;
  if (kind == "gaussian") {
    t.kind = TargetSpec::Kind::gaussian;
    check_keys(j, ctx, {"kind", "dim", "kappa", "mean", "covariance"});
    read(j, ctx, "dim", t.dim);
    read(j, ctx, "kappa", t.kappa);
    if (j.contains("covariance")) {
      if (j.contains("dim") || j.contains("kappa"))
        throw ConfigError("target: give either covariance or (dim, kappa), not both");
      t.covariance = read_matrix(j.at("covariance"), "target.covariance");
      t.mean = j.contains("mean") ? read_vector(j.at("mean"), "target.mean")
                                  : Vector(Vector::Zero(t.covariance->rows()));
      t.dim = t.covariance->rows();
    } else if (j.contains("mean")) {
      throw ConfigError("target.mean requires target.covariance");
    }
  } else if (kind == "logistic") {
    t.kind = TargetSpec::Kind::logistic;
    check_keys(j, ctx, {"kind", "n", "d", "prior_sigma", "covariate_eig_lo", "covariate_eig_hi", "design", "labels"});
    read_data_options(j, ctx, t.data);
    if (j.contains("design") != j.contains("labels"))
      throw ConfigError("target: design and labels must be given together");
    if (j.contains("design")) {
      t.design = read_matrix(j.at("design"), "target.design");
      t.labels = read_vector(j.at("labels"), "target.labels");
      t.data.n = t.design->rows();
      t.data.d = t.design->cols();
    }
    t.dim = t.data.d;
  } else if (kind == "oracle") {
    t.kind = TargetSpec::Kind::oracle;
    check_keys(j, ctx, {"kind", "dim", "command"});
    if (!j.contains("dim")) throw ConfigError("target.dim is required for oracle targets");
    read(j, ctx, "dim", t.dim);
    read_list(j, ctx, "command", t.command);
  } else {
    throw ConfigError("target.kind: unknown target '" + kind + "' (expected gaussian, logistic or oracle)");
  }
  return t;
}

void RunConfig::validate() const {
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");

  if (dims.empty() || kappas.empty() || strategies.empty())
    throw ConfigError("sweep: dims, kappas and strategies must be non-empty");
  for (long d : dims)
    if (d < 2) throw ConfigError("sweep.dims entries must be >= 2");
  for (double k : kappas)
    if (!(k >= 1.0)) throw ConfigError("sweep.kappas entries must be >= 1");
  for (const auto& s : strategies) {
    if (s != "pca" && s != "random" && s != "identity")
      throw ConfigError("sweep.strategies: unknown strategy '" + s + "'");
  }
  if (!(kl_threshold > 0)) throw ConfigError("sweep.threshold must be positive");

  try {
    strategy.validate();
    mfvi.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  if (family.kind == MapFamily::Kind::spline) {
    if (family.knots < 2 || family.knots * RQSplineMap::kMinBinFraction >= 1.0)
      throw ConfigError("family.knots must lie in [2, 999]");
    if (!(family.bound > 0)) throw ConfigError("family.bound must be positive");
  }
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (eval_samples < 2) throw ConfigError("eval_samples must be >= 2");
  if (early_stop_eigen_threshold < 0) throw ConfigError("early_stop_eigen_threshold must be >= 0");
  if (!(optimizer.learning_rate > 0) || optimizer.max_steps < 1 || !(optimizer.score_tolerance > 0) ||
      !(optimizer.hessian_step > 0) || optimizer.newton_polish_steps < 0)
    throw ConfigError("laplace: learning_rate, max_steps, score_tolerance and hessian_step must be positive");

  validate_data_options(logistic.data, "logistic");
  if (logistic.random_iterations.empty()) throw ConfigError("logistic.random_iterations must be non-empty");
  for (long k : logistic.random_iterations)
    if (k < 1) throw ConfigError("logistic.random_iterations entries must be >= 1");
  if (logistic.monotonicity_iterations < 1) throw ConfigError("logistic.monotonicity_iterations must be >= 1");
  if (logistic.reference_samples < 2) throw ConfigError("logistic.reference_samples must be >= 2");
  if (logistic.rwm.burn_in < 0 || logistic.rwm.thin < 1 || logistic.rwm.chains < 1 || logistic.rwm.step_scale < 0)
    throw ConfigError("logistic.rwm: burn_in >= 0, thin >= 1, chains >= 1, step_scale >= 0 required");

  switch (target.kind) {
    case TargetSpec::Kind::gaussian:
      if (target.covariance) {
        const Matrix& c = *target.covariance;
        if (c.rows() != c.cols() || c.rows() < 1) throw ConfigError("target.covariance must be square");
        if (!target.mean || target.mean->size() != c.rows())
          throw ConfigError("target.mean length must match target.covariance");
        if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, c.cwiseAbs().maxCoeff()))
          throw ConfigError("target.covariance must be symmetric");
        if (Eigen::LLT<Matrix>(c).info() != Eigen::Success)
          throw ConfigError("target.covariance must be positive definite");
      } else {
        if (target.dim < 2) throw ConfigError("target.dim must be >= 2 for generated Gaussians");
        if (!(target.kappa >= 1.0)) throw ConfigError("target.kappa must be >= 1");
      }
      break;
    case TargetSpec::Kind::logistic:
      validate_data_options(target.data, "target");
      if (target.design) {
        if (target.labels->size() != target.design->rows())
          throw ConfigError("target.labels length must equal the number of design rows");
        for (Eigen::Index i = 0; i < target.labels->size(); ++i) {
          const double y = (*target.labels)(i);
          if (y != 0.0 && y != 1.0) throw ConfigError("target.labels must be 0 or 1");
        }
      }
      break;
    case TargetSpec::Kind::oracle:
      if (target.dim < 1) throw ConfigError("target.dim must be >= 1");
      if (target.command.empty() || target.command[0].empty())
        throw ConfigError("target.command must name an executable");
      break;
  }
}

GaussianizationOptions RunConfig::gaussianization_options() const {
  GaussianizationOptions o;
  o.family = family;
  o.mfvi = mfvi;
  o.early_stop_eigen_threshold = early_stop_eigen_threshold;
  return o;
}

RunConfig config_from_json(const Json& j) {
  check_keys(j, "config",
             {"version", "experiment", "seed", "replicates", "threads", "output_dir", "sweep", "strategy", "family",
              "mfvi", "iterations", "eval_samples", "early_stop_eigen_threshold", "laplace", "logistic", "target"});
  RunConfig c;
  int version = kConfigVersion;
  read(j, "", "version", version);
  if (version != kConfigVersion) throw ConfigError("version: unsupported config version " + std::to_string(version));

  std::string experiment = "custom";
  read(j, "", "experiment", experiment);
  if (experiment == "gaussian_sweep") {
    c.experiment = RunConfig::Experiment::gaussian_sweep;
  } else if (experiment == "logistic") {
    c.experiment = RunConfig::Experiment::logistic;
  } else if (experiment == "custom") {
    c.experiment = RunConfig::Experiment::custom;
  } else {
    throw ConfigError("experiment: unknown experiment '" + experiment + "'");
  }
  read(j, "", "seed", c.seed);
  read(j, "", "replicates", c.replicates);
  read(j, "", "threads", c.threads);
  read(j, "", "output_dir", c.output_dir);
  read(j, "", "iterations", c.iterations);
  read(j, "", "eval_samples", c.eval_samples);
  read(j, "", "early_stop_eigen_threshold", c.early_stop_eigen_threshold);

  if (j.contains("sweep")) {
    const Json& s = j.at("sweep");
    check_keys(s, "sweep", {"dims", "kappas", "strategies", "threshold"});
    read_list(s, "sweep", "dims", c.dims);
    read_list(s, "sweep", "kappas", c.kappas);
    read_list(s, "sweep", "strategies", c.strategies);
    read(s, "sweep", "threshold", c.kl_threshold);
  }
  if (j.contains("strategy")) {
    const Json& s = j.at("strategy");
    std::string kind = c.strategy.name();
    if (s.is_string()) {
      kind = s.get<std::string>();
    } else {
      check_keys(s, "strategy", {"kind", "var_threshold", "h_samples"});
      read(s, "strategy", "kind", kind);
      read(s, "strategy", "var_threshold", c.strategy.var_threshold);
      read(s, "strategy", "h_samples", c.strategy.h_samples);
    }
    try {
      const RotationStrategy parsed = RotationStrategy::parse(kind);
      c.strategy.kind = parsed.kind;
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("strategy.kind: ") + e.what());
    }
  }
  if (j.contains("family")) {
    const Json& f = j.at("family");
    check_keys(f, "family", {"kind", "knots", "bound"});
    std::string kind = "spline";
    read(f, "family", "kind", kind);
    if (kind == "spline") {
      c.family.kind = MapFamily::Kind::spline;
    } else if (kind == "affine") {
      c.family.kind = MapFamily::Kind::affine;
    } else {
      throw ConfigError("family.kind: unknown family '" + kind + "' (expected affine or spline)");
    }
    read(f, "family", "knots", c.family.knots);
    read(f, "family", "bound", c.family.bound);
  }
  if (j.contains("mfvi")) {
    const Json& m = j.at("mfvi");
    check_keys(m, "mfvi",
               {"mc_batch", "steps", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "divergence_guard"});
    read(m, "mfvi", "mc_batch", c.mfvi.mc_batch);
    read(m, "mfvi", "steps", c.mfvi.steps);
    read(m, "mfvi", "learning_rate", c.mfvi.learning_rate);
    read(m, "mfvi", "adam_beta1", c.mfvi.adam_beta1);
    read(m, "mfvi", "adam_beta2", c.mfvi.adam_beta2);
    read(m, "mfvi", "adam_eps", c.mfvi.adam_eps);
    read(m, "mfvi", "divergence_guard", c.mfvi.divergence_guard);
  }
  if (j.contains("laplace")) {
    const Json& l = j.at("laplace");
    check_keys(l, "laplace",
               {"enabled", "learning_rate", "max_steps", "score_tolerance", "hessian_step", "newton_polish_steps"});
    read(l, "laplace", "enabled", c.laplace);
    read(l, "laplace", "learning_rate", c.optimizer.learning_rate);
    read(l, "laplace", "max_steps", c.optimizer.max_steps);
    read(l, "laplace", "score_tolerance", c.optimizer.score_tolerance);
    read(l, "laplace", "hessian_step", c.optimizer.hessian_step);
    read(l, "laplace", "newton_polish_steps", c.optimizer.newton_polish_steps);
  }
  if (j.contains("logistic")) {
    const Json& l = j.at("logistic");
    check_keys(l, "logistic",
               {"n", "d", "prior_sigma", "covariate_eig_lo", "covariate_eig_hi", "fixed_data", "random_iterations",
                "monotonicity_iterations", "reference_samples", "rwm"});
    read_data_options(l, "logistic", c.logistic.data);
    read(l, "logistic", "fixed_data", c.logistic.fixed_data);
    read_list(l, "logistic", "random_iterations", c.logistic.random_iterations);
    read(l, "logistic", "monotonicity_iterations", c.logistic.monotonicity_iterations);
    read(l, "logistic", "reference_samples", c.logistic.reference_samples);
    if (l.contains("rwm")) {
      const Json& r = l.at("rwm");
      check_keys(r, "logistic.rwm", {"burn_in", "thin", "chains", "step_scale"});
      read(r, "logistic.rwm", "burn_in", c.logistic.rwm.burn_in);
      read(r, "logistic.rwm", "thin", c.logistic.rwm.thin);
      read(r, "logistic.rwm", "chains", c.logistic.rwm.chains);
      read(r, "logistic.rwm", "step_scale", c.logistic.rwm.step_scale);
    }
  }
  if (j.contains("target")) c.target = target_spec_from_json(j.at("target"));
  c.validate();
  return c;
}

Json config_to_json(const RunConfig& c) {
  Json j = Json::object();
  j["version"] = kConfigVersion;
  j["experiment"] = RunConfig::experiment_name(c.experiment);
  j["seed"] = c.seed;
  j["replicates"] = c.replicates;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  j["sweep"] = {{"dims", c.dims}, {"kappas", c.kappas}, {"strategies", c.strategies}, {"threshold", c.kl_threshold}};
  j["strategy"] = {
      {"kind", c.strategy.name()}, {"var_threshold", c.strategy.var_threshold}, {"h_samples", c.strategy.h_samples}};
  j["family"] = {{"kind", c.family.kind == MapFamily::Kind::spline ? "spline" : "affine"},
                 {"knots", c.family.knots},
                 {"bound", c.family.bound}};
  j["mfvi"] = {{"mc_batch", c.mfvi.mc_batch},
               {"steps", c.mfvi.steps},
               {"learning_rate", c.mfvi.learning_rate},
               {"adam_beta1", c.mfvi.adam_beta1},
               {"adam_beta2", c.mfvi.adam_beta2},
               {"adam_eps", c.mfvi.adam_eps},
               {"divergence_guard", c.mfvi.divergence_guard}};
  j["iterations"] = c.iterations;
  j["eval_samples"] = c.eval_samples;
  j["early_stop_eigen_threshold"] = c.early_stop_eigen_threshold;
  j["laplace"] = {{"enabled", c.laplace},
                  {"learning_rate", c.optimizer.learning_rate},
                  {"max_steps", c.optimizer.max_steps},
                  {"score_tolerance", c.optimizer.score_tolerance},
                  {"hessian_step", c.optimizer.hessian_step},
                  {"newton_polish_steps", c.optimizer.newton_polish_steps}};
  Json lg = Json::object();
  write_data_options(lg, c.logistic.data);
  lg["fixed_data"] = c.logistic.fixed_data;
  lg["random_iterations"] = c.logistic.random_iterations;
  lg["monotonicity_iterations"] = c.logistic.monotonicity_iterations;
  lg["reference_samples"] = c.logistic.reference_samples;
  lg["rwm"] = {{"burn_in", c.logistic.rwm.burn_in},
               {"thin", c.logistic.rwm.thin},
               {"chains", c.logistic.rwm.chains},
               {"step_scale", c.logistic.rwm.step_scale}};
  j["logistic"] = lg;
  j["target"] = target_spec_to_json(c.target);
  return j;
}

RunConfig load_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file '" + file + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + file + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfig& c) {
  Json j = config_to_json(c);
  j.erase("threads");
  j.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace igauss
