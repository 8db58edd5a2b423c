#include "igauss/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "igauss/oracle.hpp"
#include "igauss/parallel.hpp"

namespace igauss {

namespace fs = std::filesystem;

namespace {

// Sub-stream labels of a replicate (or custom run) stream.
enum Stream : std::uint64_t {
  kData = 0,
  kReference = 1,
  kIdentityRun = 2,
  kRandomRun = 3,
  kPcaRun = 4,
  kRandomIterRun = 5,
  kEvaluation = 6,
  kMonotonicity = 7,
};
constexpr std::uint64_t kFixedDataStream = 0xda7aULL;

std::string replicate_label(long r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "rep%02ld", r);
  return buf;
}

Json record_to_json(const IterationRecord& r) {
  Json j = Json::object();
  j["strategy"] = r.strategy;
  j["rank"] = r.rank;
  j["elbo"] = to_hex_float(r.elbo);
  j["restarted"] = r.restarted;
  j["eigenvalues"] = vector_to_json(r.eigenvalues);
  Json trace = Json::array();
  for (double v : r.loss_trace) trace.push_back(to_hex_float(v));
  j["loss_trace"] = std::move(trace);
  return j;
}

IterationRecord record_from_json(const Json& j) {
  IterationRecord r;
  r.strategy = j.at("strategy").get<std::string>();
  r.rank = j.at("rank").get<Eigen::Index>();
  r.elbo = from_hex_float(j.at("elbo").get<std::string>());
  r.restarted = j.at("restarted").get<bool>();
  r.eigenvalues = vector_from_json(j.at("eigenvalues"));
  for (const auto& v : j.at("loss_trace")) r.loss_trace.push_back(from_hex_float(v.get<std::string>()));
  return r;
}

// Lower Cholesky factor of the correlation implied by a Laplace covariance; identity when unusable.
Matrix correlation_chol(const Matrix& cov) {
  const Eigen::Index d = cov.rows();
  if (cov.size() == 0 || !cov.allFinite() || (cov.diagonal().array() <= 0).any()) return Matrix::Identity(d, d);
  const Vector inv_sd = cov.diagonal().array().sqrt().inverse();
  const Matrix corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  Eigen::LLT<Matrix> llt(corr);
  if (llt.info() != Eigen::Success) return Matrix::Identity(d, d);
  return llt.matrixL();
}

std::vector<MonotonicityRow> monotonicity_rows(const TransportChain& chain, const TargetDistribution& target,
                                               long kmax, RandomStream rng, long n) {
  const Eigen::Index d = chain.dim();
  const Matrix z = rng.normal_matrix(n, d);
  std::vector<MonotonicityRow> rows;
  Vector prev;
  const long top = std::min<long>(kmax, static_cast<long>(chain.size()));
  for (long k = 0; k <= top; ++k) {
    const TransportChain q = chain.prefix(static_cast<std::size_t>(k));
    Vector l(n);
    for (long i = 0; i < n; ++i) {
      const Vector zi = z.row(i).transpose();
      const auto [x, logdet] = q.push_forward(zi);
      l(i) = log_std_normal(zi) - logdet - target.log_density(x);
    }
    MonotonicityRow row;
    row.k = k;
    row.kl = l.mean();
    row.kl_se = std::sqrt((l.array() - row.kl).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n));
    if (k > 0) {
      const Vector diff = l - prev;
      row.diff = diff.mean();
      row.diff_se =
          std::sqrt((diff.array() - row.diff).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n));
    }
    rows.push_back(row);
    prev = std::move(l);
  }
  return rows;
}

MetricsRecord failed_record(const std::string& run_id, long k, std::uint64_t seed) {
  MetricsRecord r;
  r.run_id = run_id;
  r.k = k;
  r.failed = true;
  r.seed = seed;
  r.elbo = r.mmd = r.ksd = r.ess = std::nan("");
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<SweepRow> run_gaussian_sweep(const RunConfig& c) {
  c.validate();
  std::vector<SweepRow> rows;
  const RandomStream root(c.seed);
  for (std::size_t di = 0; di < c.dims.size(); ++di) {
    for (std::size_t ki = 0; ki < c.kappas.size(); ++ki) {
      // Strategies share the cell seed, so they face the same covariances.
      const std::uint64_t cell_seed = root.split(di * c.kappas.size() + ki).seed();
      for (const auto& name : c.strategies) {
        RotationStrategy s = RotationStrategy::parse(name);
        s.var_threshold = c.strategy.var_threshold;
        SweepRow row;
        row.d = c.dims[di];
        row.kappa = c.kappas[ki];
        row.strategy = name;
        row.cell = iterations_to_threshold(row.d, row.kappa, s, c.kl_threshold, c.replicates, cell_seed, c.threads);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string csv_preamble(const std::string& kind, const RunConfig& c) {
  return "# igauss " + kind + " v1 config_hash=" + config_hash(c) + " seed=" + std::to_string(c.seed) + "\n";
}

std::string sweep_csv(const RunConfig& c, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << csv_preamble("sweep", c);
  os << "d,kappa,strategy,mean_iters,sd_iters,replicates,censored\n";
  for (const auto& r : rows) {
    os << r.d << "," << format_double(r.kappa) << "," << r.strategy << "," << format_double(r.cell.mean_iters) << ","
       << format_double(r.cell.sd_iters) << "," << r.cell.replicates << "," << r.cell.censored << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

LogisticReplicate run_logistic_replicate(const RunConfig& c, long r) {
  const RandomStream root(c.seed);
  const RandomStream rep = root.split(static_cast<std::uint64_t>(r));
  LogisticReplicate out;
  out.replicate = r;
  out.seed = rep.seed();
  const std::string label = replicate_label(r);

  RandomStream data_rng = c.logistic.fixed_data ? root.split(kFixedDataStream) : rep.split(kData);
  auto base = std::make_shared<const LogisticRegressionTarget>(make_logistic_benchmark(data_rng, c.logistic.data));
  out.data.kind = TargetSpec::Kind::logistic;
  out.data.design = base->design();
  out.data.labels = base->labels();
  out.data.data = c.logistic.data;
  out.data.dim = base->dim();

  out.laplace = laplace_standardize(base, c.optimizer);
  const TargetPtr target = out.laplace.target;

  RandomStream ref_rng = rep.split(kReference);
  const Matrix reference = rwm_reference_samples(*target, c.logistic.reference_samples,
                                                 correlation_chol(out.laplace.covariance), ref_rng, c.logistic.rwm);

  const RandomStream eval_rng = rep.split(kEvaluation);
  const EvaluationOptions eo{c.eval_samples};
  auto evaluate = [&](const std::string& variant, const TransportChain& chain, long k) {
    const std::string run_id = label + "-" + variant;
    try {
      RandomStream ev = eval_rng;  // common random numbers across variants
      MetricsRecord m = evaluate_chain(chain.prefix(static_cast<std::size_t>(k)), *target, reference, ev, eo);
      m.run_id = run_id;
      m.k = k;
      m.seed = out.seed;
      return m;
    } catch (const NumericalError&) {
      return failed_record(run_id, k, out.seed);
    }
  };

  const GaussianizationOptions go = c.gaussianization_options();
  out.metrics.push_back(evaluate("base", TransportChain(target->dim()), 0));

  struct OneStep {
    const char* variant;
    RotationStrategy strategy;
    Stream stream;
  };
  RotationStrategy pca = c.strategy;
  pca.kind = RotationStrategy::Kind::pca;
  const OneStep one_step[] = {{kVariantIdentity, RotationStrategy::identity(), kIdentityRun},
                              {kVariantRandom, RotationStrategy::random(), kRandomRun},
                              {kVariantPca, pca, kPcaRun}};
  for (const auto& v : one_step) {
    VariantRun vr;
    vr.variant = v.variant;
    GaussianizationRun run(target, rep.split(v.stream).seed());
    try {
      run_iteration(run, v.strategy, go);
    } catch (const MfviError& e) {
      vr.error = e.what();
    } catch (const NumericalError& e) {
      vr.error = e.what();
    }
    if (run.iterations() == 1) {
      out.metrics.push_back(evaluate(v.variant, run.chain(), 1));
    } else {
      out.metrics.push_back(failed_record(label + "-" + v.variant, 1, out.seed));
    }
    vr.run = std::move(run);
    out.runs.push_back(std::move(vr));
  }

  const long kmax = std::max(*std::max_element(c.logistic.random_iterations.begin(), c.logistic.random_iterations.end()),
                             c.logistic.monotonicity_iterations);
  VariantRun iter;
  iter.variant = kVariantRandomIter;
  GaussianizationRun run(target, rep.split(kRandomIterRun).seed());
  while (static_cast<long>(run.iterations()) < kmax) {
    try {
      run_iteration(run, RotationStrategy::random(), go);
    } catch (const MfviError& e) {
      iter.error = e.what();
      break;
    } catch (const NumericalError& e) {
      iter.error = e.what();
      break;
    }
  }
  for (long k = 1; k <= kmax; ++k) {
    if (k <= static_cast<long>(run.iterations())) {
      out.metrics.push_back(evaluate(kVariantRandomIter, run.chain(), k));
    } else {
      out.metrics.push_back(failed_record(label + "-" + kVariantRandomIter, k, out.seed));
    }
  }
  out.monotonicity = monotonicity_rows(run.chain(), *target, c.logistic.monotonicity_iterations,
                                       rep.split(kMonotonicity), c.eval_samples);
  iter.run = std::move(run);
  out.runs.push_back(std::move(iter));
  return out;
}

}  // namespace

LogisticResult run_logistic_experiment(const RunConfig& c) {
  c.validate();
  LogisticResult result;
  result.replicates.resize(static_cast<std::size_t>(c.replicates));
  parallel_for(c.replicates, c.threads,
               [&](long r) { result.replicates[static_cast<std::size_t>(r)] = run_logistic_replicate(c, r); });
  return result;
}

// ---------------------------------------------------------------------------

BuiltTarget build_target(const TargetSpec& spec, RandomStream& rng) {
  BuiltTarget out;
  out.spec = spec;
  switch (spec.kind) {
    case TargetSpec::Kind::gaussian: {
      std::shared_ptr<const GaussianTarget> g;
      if (spec.covariance) {
        g = std::make_shared<const GaussianTarget>(*spec.mean, *spec.covariance);
      } else {
        g = std::make_shared<const GaussianTarget>(make_conditioned_gaussian(spec.dim, spec.kappa, rng));
        out.spec.mean = g->mean();
        out.spec.covariance = g->covariance();
      }
      out.spec.dim = g->dim();
      out.target = g;
      break;
    }
    case TargetSpec::Kind::logistic: {
      std::shared_ptr<const LogisticRegressionTarget> t;
      if (spec.design) {
        t = std::make_shared<const LogisticRegressionTarget>(*spec.design, *spec.labels, spec.data.prior_sigma);
      } else {
        t = std::make_shared<const LogisticRegressionTarget>(make_logistic_benchmark(rng, spec.data));
        out.spec.design = t->design();
        out.spec.labels = t->labels();
      }
      out.spec.dim = t->dim();
      out.target = t;
      break;
    }
    case TargetSpec::Kind::oracle:
      out.target = std::make_shared<const OracleTarget>(spec.command, spec.dim);
      break;
  }
  return out;
}

Json saved_run_to_json(const SavedRun& s) {
  Json cfg = config_to_json(s.config);
  cfg.erase("threads");
  cfg.erase("output_dir");
  Json j = Json::object();
  j["format"] = "igauss-run";
  j["version"] = 1;
  j["library_version"] = kLibraryVersion;
  j["config_hash"] = config_hash(s.config);
  j["seed"] = s.config.seed;
  j["run_seed"] = s.run_seed;
  j["replicate"] = s.replicate;
  j["variant"] = s.variant;
  j["config"] = std::move(cfg);
  j["target"] = target_spec_to_json(s.target);
  if (s.shift) {
    j["standardization"] = {{"shift", vector_to_json(*s.shift)}, {"scale", vector_to_json(*s.scale)}};
  } else {
    j["standardization"] = nullptr;
  }
  Json recs = Json::array();
  for (const auto& r : s.records) recs.push_back(record_to_json(r));
  j["records"] = std::move(recs);
  j["chain"] = chain_to_json(s.chain);
  return j;
}

SavedRun saved_run_from_json(const Json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "igauss-run") throw ConfigError("not an igauss run file");
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported run file version");
    SavedRun s;
    s.config = config_from_json(j.at("config"));
    s.run_seed = j.at("run_seed").get<std::uint64_t>();
    s.replicate = j.at("replicate").get<long>();
    s.variant = j.at("variant").get<std::string>();
    s.target = target_spec_from_json(j.at("target"));
    const Json& st = j.at("standardization");
    if (!st.is_null()) {
      s.shift = vector_from_json(st.at("shift"));
      s.scale = vector_from_json(st.at("scale"));
    }
    for (const auto& r : j.at("records")) s.records.push_back(record_from_json(r));
    s.chain = chain_from_json(j.at("chain"));
    if (s.chain.size() != s.records.size()) throw ConfigError("run file: record count differs from chain length");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run file: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("malformed run file: ") + e.what());
  }
}

TargetPtr working_target(const SavedRun& s) {
  RandomStream unused(0);
  TargetPtr base = build_target(s.target, unused).target;
  if (!s.shift) return base;
  return std::make_shared<const StandardizedTarget>(base, *s.shift, *s.scale);
}

std::vector<MetricsRecord> evaluate_saved_run(const SavedRun& s, std::uint64_t seed, long eval_samples) {
  require(eval_samples >= 2, "evaluate_saved_run: eval_samples must be >= 2");
  const TargetPtr work = working_target(s);
  const Eigen::Index d = work->dim();
  const RandomStream root(seed);

  // Working-coordinate Gaussian when the base is Gaussian (exact reference draws, analytic KL).
  std::optional<GaussianTarget> gauss;
  if (s.target.kind == TargetSpec::Kind::gaussian) {
    Vector m = *s.target.mean;
    Matrix cov = *s.target.covariance;
    if (s.shift) {
      const Vector inv = s.scale->cwiseInverse();
      m = (m - *s.shift).cwiseProduct(inv);
      cov = inv.asDiagonal() * cov * inv.asDiagonal();
    }
    gauss.emplace(m, cov);
  }

  RandomStream ref_rng = root.split(kReference);
  Matrix reference;
  const long n_ref = s.config.logistic.reference_samples;
  if (gauss) {
    reference.resize(n_ref, d);
    for (long i = 0; i < n_ref; ++i)
      reference.row(i) = (gauss->mean() + gauss->chol() * ref_rng.normal_vector(d)).transpose();
  } else {
    reference = rwm_reference_samples(*work, n_ref, Matrix::Identity(d, d), ref_rng, s.config.logistic.rwm);
  }

  const RandomStream eval_rng = root.split(kEvaluation);
  const std::string run_id = s.variant;
  std::vector<MetricsRecord> rows;
  for (std::size_t k = 0; k <= s.chain.size(); ++k) {
    const TransportChain q = s.chain.prefix(k);
    RandomStream ev = eval_rng;
    MetricsRecord m;
    try {
      m = evaluate_chain(q, *work, reference, ev, {eval_samples});
    } catch (const NumericalError&) {
      m = failed_record(run_id, static_cast<long>(k), seed);
    }
    m.run_id = run_id;
    m.k = static_cast<long>(k);
    m.seed = seed;
    if (gauss && !m.failed) m.kl_analytic = affine_gaussian_kl(q, *gauss);
    rows.push_back(std::move(m));
  }
  return rows;
}

std::uint64_t evaluation_seed(std::uint64_t base_seed) { return RandomStream(base_seed).split(kEvaluation).seed(); }

CustomResult run_custom(const RunConfig& c) {
  c.validate();
  const RandomStream root(c.seed);
  RandomStream target_rng = root.split(kData);
  BuiltTarget bt = build_target(c.target, target_rng);

  CustomResult out;
  SavedRun& s = out.saved;
  s.config = c;
  s.variant = c.strategy.name();
  s.run_seed = root.split(kRandomIterRun).seed();
  s.target = bt.spec;
  TargetPtr work = bt.target;
  if (c.laplace) {
    const LaplaceResult lap = laplace_standardize(bt.target, c.optimizer);
    s.shift = lap.shift;
    s.scale = lap.scale;
    work = lap.target;
  }
  GaussianizationRun run(work, s.run_seed);
  extend_run(run, static_cast<std::size_t>(c.iterations), c.strategy, c.gaussianization_options());
  s.chain = run.chain();
  s.records = run.records();
  out.metrics = evaluate_saved_run(s, evaluation_seed(c.seed), c.eval_samples);
  return out;
}

// ---------------------------------------------------------------------------

std::string metrics_csv(const RunConfig& c, const std::vector<MetricsRecord>& rows) {
  std::string s = csv_preamble("metrics", c) + metrics_csv_header() + "\n";
  for (const auto& r : rows) s += metrics_csv_row(r) + "\n";
  return s;
}

std::string monotonicity_csv(const RunConfig& c, const std::vector<std::pair<std::string, MonotonicityRow>>& rows) {
  std::string s = csv_preamble("monotonicity", c) + "run_id,k,kl,kl_se,diff,diff_se\n";
  for (const auto& [id, r] : rows) {
    s += id + "," + std::to_string(r.k) + "," + format_double(r.kl) + "," + format_double(r.kl_se) + "," +
         format_double(r.diff) + "," + format_double(r.diff_se) + "\n";
  }
  return s;
}

void write_text_file(const std::string& file, const std::string& text) {
  const fs::path p(file);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + file + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + file + "'");
}

namespace {

Json metrics_sidecar(const RunConfig& c, const std::vector<MetricsRecord>& rows) {
  Json j = Json::object();
  j["config_hash"] = config_hash(c);
  j["seed"] = c.seed;
  j["mmd_kernel"] = kMmdKernel;
  j["ksd_kernel"] = kKsdKernel;
  j["bandwidth_floor"] = kBandwidthFloor;
  j["elbo_note"] = "ELBO of the unnormalized target";
  Json r = Json::array();
  for (const auto& m : rows) {
    r.push_back({{"run_id", m.run_id}, {"k", m.k}, {"seed", m.seed}, {"mmd_bandwidth", m.mmd_bandwidth}});
  }
  j["rows"] = std::move(r);
  return j;
}

std::string out_path(const RunConfig& c, const std::string& rel) { return (fs::path(c.output_dir) / rel).string(); }

}  // namespace

std::vector<std::string> write_sweep_outputs(const RunConfig& c, const std::vector<SweepRow>& rows) {
  write_text_file(out_path(c, "sweep.csv"), sweep_csv(c, rows));
  return {"sweep.csv"};
}

std::vector<std::string> write_logistic_outputs(const RunConfig& c, const LogisticResult& result) {
  std::vector<std::string> files;
  std::vector<MetricsRecord> rows;
  std::vector<std::pair<std::string, MonotonicityRow>> mono;
  Json reps = Json::array();
  for (const auto& rep : result.replicates) {
    const std::string label = replicate_label(rep.replicate);
    rows.insert(rows.end(), rep.metrics.begin(), rep.metrics.end());
    for (const auto& m : rep.monotonicity) mono.emplace_back(label + "-" + kVariantRandomIter, m);
    Json errors = Json::object();
    for (const auto& vr : rep.runs) {
      if (!vr.error.empty()) errors[vr.variant] = vr.error;
      if (!vr.run || vr.run->iterations() == 0) continue;
      SavedRun s;
      s.config = c;
      s.variant = vr.variant;
      s.replicate = rep.replicate;
      s.run_seed = vr.run->seed();
      s.target = rep.data;
      s.shift = rep.laplace.shift;
      s.scale = rep.laplace.scale;
      s.chain = vr.run->chain();
      s.records = vr.run->records();
      const std::string rel = "runs/" + label + "-" + vr.variant + ".json";
      write_text_file(out_path(c, rel), saved_run_to_json(s).dump(1) + "\n");
      files.push_back(rel);
    }
    std::vector<Eigen::Index> fb = rep.laplace.fallback_coordinates;
    reps.push_back({{"replicate", rep.replicate},
                    {"seed", rep.seed},
                    {"laplace_score_norm_inf", rep.laplace.score_norm_inf},
                    {"laplace_steps", rep.laplace.steps},
                    {"laplace_fallback_coordinates", fb},
                    {"errors", errors}});
  }
  write_text_file(out_path(c, "metrics.csv"), metrics_csv(c, rows));
  files.insert(files.begin(), "metrics.csv");
  write_text_file(out_path(c, "monotonicity.csv"), monotonicity_csv(c, mono));
  files.insert(files.begin() + 1, "monotonicity.csv");
  Json side = metrics_sidecar(c, rows);
  side["replicates"] = std::move(reps);
  write_text_file(out_path(c, "metrics.meta.json"), side.dump(1) + "\n");
  files.insert(files.begin() + 2, "metrics.meta.json");
  return files;
}

std::vector<std::string> write_custom_outputs(const RunConfig& c, const CustomResult& result) {
  write_text_file(out_path(c, "chain.json"), saved_run_to_json(result.saved).dump(1) + "\n");
  write_text_file(out_path(c, "metrics.csv"), metrics_csv(c, result.metrics));
  write_text_file(out_path(c, "metrics.meta.json"), metrics_sidecar(c, result.metrics).dump(1) + "\n");
  return {"chain.json", "metrics.csv", "metrics.meta.json"};
}

void write_manifest(const RunConfig& c, const std::vector<std::string>& files) {
  Json cfg = config_to_json(c);
  cfg.erase("threads");
  cfg.erase("output_dir");
  Json j = Json::object();
  j["tool"] = "igauss";
  j["library_version"] = kLibraryVersion;
  j["experiment"] = RunConfig::experiment_name(c.experiment);
  j["config_hash"] = config_hash(c);
  j["seed"] = c.seed;
  j["files"] = files;
  j["config"] = std::move(cfg);
  write_text_file(out_path(c, "manifest.json"), j.dump(1) + "\n");
}

}  // namespace igauss
