#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "igauss/experiments.hpp"
#include "igauss/oracle.hpp"

namespace py = pybind11;
using namespace igauss;

namespace {

// Target backed by Python callables; only used from the calling thread.
class CallableTarget final : public TargetDistribution {
 public:
  CallableTarget(Eigen::Index dim, py::function log_density, py::function score)
      : dim_(dim), logp_(std::move(log_density)), score_(std::move(score)) {}

  Eigen::Index dim() const override { return dim_; }
  double log_density(const Vector& x) const override { return logp_(x).cast<double>(); }
  Vector score(const Vector& x) const override {
    Vector s = score_(x).cast<Vector>();
    require_dim(s.size(), dim_, "python score");
    return s;
  }
  std::string name() const override { return "python"; }

 private:
  Eigen::Index dim_;
  py::function logp_;
  py::function score_;
};

RotationStrategy parse_strategy(const std::string& name, double var_threshold, long h_samples) {
  RotationStrategy s = RotationStrategy::parse(name);
  s.var_threshold = var_threshold;
  s.h_samples = h_samples;
  s.validate();
  return s;
}

MapFamily parse_family(const std::string& kind, int knots, double bound) {
  if (kind == "affine") return MapFamily::affine();
  if (kind == "spline") return MapFamily{MapFamily::Kind::spline, knots, bound};
  throw ContractViolation("family must be 'affine' or 'spline'");
}

py::dict record_to_dict(const IterationRecord& r) {
  py::dict d;
  d["strategy"] = r.strategy;
  d["rank"] = r.rank;
  d["eigenvalues"] = r.eigenvalues;
  d["loss_trace"] = r.loss_trace;
  d["elbo"] = r.elbo;
  d["restarted"] = r.restarted;
  return d;
}

py::dict metrics_to_dict(const MetricsRecord& m) {
  py::dict d;
  d["run_id"] = m.run_id;
  d["k"] = m.k;
  d["elbo"] = m.elbo;
  d["mmd"] = m.mmd;
  d["ksd"] = m.ksd;
  d["ess"] = m.ess;
  d["kl_analytic"] = m.kl_analytic ? py::cast(*m.kl_analytic) : py::none();
  d["failed"] = m.failed;
  d["seed"] = m.seed;
  return d;
}

Json parse_json(const std::string& s) {
  try {
    return Json::parse(s);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Iterative Gaussianization with score-based PCA rotations and mean-field VI";
  m.attr("__version__") = kLibraryVersion;

  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<OracleError>(m, "OracleError", PyExc_RuntimeError);
  py::register_exception<MfviError>(m, "MfviError", PyExc_RuntimeError);

  // ---- targets
  py::class_<TargetDistribution, std::shared_ptr<TargetDistribution>>(m, "Target")
      .def_property_readonly("dim", &TargetDistribution::dim)
      .def_property_readonly("name", &TargetDistribution::name)
      .def("log_density", &TargetDistribution::log_density, py::arg("x"))
      .def("score", &TargetDistribution::score, py::arg("x"));

  py::class_<GaussianTarget, TargetDistribution, std::shared_ptr<GaussianTarget>>(m, "GaussianTarget")
      .def(py::init<Vector, Matrix>(), py::arg("mean"), py::arg("covariance"))
      .def_property_readonly("mean", &GaussianTarget::mean)
      .def_property_readonly("covariance", &GaussianTarget::covariance)
      .def_property_readonly("precision", &GaussianTarget::precision);

  py::class_<LogisticRegressionTarget, TargetDistribution, std::shared_ptr<LogisticRegressionTarget>>(
      m, "LogisticRegressionTarget")
      .def(py::init<Matrix, Vector, double>(), py::arg("design"), py::arg("labels"), py::arg("prior_sigma") = 2.0);

  py::class_<CallableTarget, TargetDistribution, std::shared_ptr<CallableTarget>>(m, "CallableTarget")
      .def(py::init<Eigen::Index, py::function, py::function>(), py::arg("dim"), py::arg("log_density"),
           py::arg("score"));

  py::class_<OracleTarget, TargetDistribution, std::shared_ptr<OracleTarget>>(m, "OracleTarget")
      .def(py::init<std::vector<std::string>, Eigen::Index>(), py::arg("command"), py::arg("dim"));

  m.def(
      "make_conditioned_gaussian",
      [](Eigen::Index d, double kappa, std::uint64_t seed) {
        RandomStream rng(seed);
        return std::make_shared<GaussianTarget>(make_conditioned_gaussian(d, kappa, rng));
      },
      py::arg("d"), py::arg("kappa"), py::arg("seed") = 0,
      "Centered Gaussian with log-spaced spectrum between 1 and kappa in a Haar-random basis.");

  m.def(
      "make_logistic_target",
      [](Eigen::Index n, Eigen::Index d, double prior_sigma, std::uint64_t seed) {
        LogisticDataOptions o;
        o.n = n;
        o.d = d;
        o.prior_sigma = prior_sigma;
        RandomStream rng(seed);
        return std::make_shared<LogisticRegressionTarget>(make_logistic_benchmark(rng, o));
      },
      py::arg("n") = 20, py::arg("d") = 10, py::arg("prior_sigma") = 2.0, py::arg("seed") = 0,
      "Synthetic Bayesian logistic-regression posterior.");

  // ---- score PCA
  m.def(
      "estimate_H",
      [](const TargetDistribution& t, long n, std::uint64_t seed) {
        RandomStream rng(seed);
        const HMatrix h = estimate_H(t, n, rng);
        return py::make_tuple(h.matrix, h.std_error);
      },
      py::arg("target"), py::arg("n_samples") = 1000, py::arg("seed") = 0,
      "Monte Carlo estimate of H = E[x h(x)^T] and its per-entry standard errors.");
  m.def(
      "eig_sym",
      [](const Matrix& h) {
        const EigenDecomposition e = eig_sym(h);
        return py::make_tuple(e.values, e.vectors);
      },
      py::arg("h"), "Jacobi eigendecomposition ordered by descending |eigenvalue|.");
  m.def(
      "select_rotation",
      [](const Vector& values, const Matrix& vectors, double threshold) {
        const RotationChoice c = select_rotation({values, vectors}, threshold);
        return py::make_tuple(c.rotation.to_dense(), c.rank);
      },
      py::arg("values"), py::arg("vectors"), py::arg("var_threshold") = 0.95);
  m.def(
      "haar_rotation", [](Eigen::Index d, std::uint64_t seed) {
        RandomStream rng(seed);
        return sample_haar_matrix(d, rng);
      },
      py::arg("d"), py::arg("seed") = 0);
  m.def(
      "pfi_lower_bound", [](const Matrix& h, const Matrix& r) { return pfi_lower_bound(h, Rotation::dense(r)); },
      py::arg("h"), py::arg("rotation"));
  m.def("random_rotation_bound", &random_rotation_bound, py::arg("eigenvalues"));

  // ---- transport chains and runs
  py::class_<TransportChain>(m, "TransportChain")
      .def_property_readonly("dim", &TransportChain::dim)
      .def("__len__", &TransportChain::size)
      .def(
          "push_forward",
          [](const TransportChain& c, const Vector& z) {
            auto [x, ld] = c.push_forward(z);
            return py::make_tuple(x, ld);
          },
          py::arg("z"))
      .def(
          "pull_back",
          [](const TransportChain& c, const Vector& x) {
            auto [z, ld] = c.pull_back(x);
            return py::make_tuple(z, ld);
          },
          py::arg("x"))
      .def("log_q", [](const TransportChain& c, const Vector& x) { return log_q(c, x); }, py::arg("x"))
      .def(
          "sample",
          [](const TransportChain& c, long n, std::uint64_t seed) {
            RandomStream rng(seed);
            const QSamples s = sample_q(c, n, rng);
            return py::make_tuple(s.x, s.log_q);
          },
          py::arg("n"), py::arg("seed") = 0)
      .def("to_json", [](const TransportChain& c) { return chain_to_json(c).dump(); })
      .def_static("from_json", [](const std::string& s) { return chain_from_json(parse_json(s)); }, py::arg("text"));

  py::class_<GaussianizationRun>(m, "GaussianizationRun")
      .def_property_readonly("chain", &GaussianizationRun::chain)
      .def_property_readonly("iterations", &GaussianizationRun::iterations)
      .def_property_readonly("seed", &GaussianizationRun::seed)
      .def_property_readonly("stopped_early", &GaussianizationRun::stopped_early)
      .def_property_readonly("records", [](const GaussianizationRun& r) {
        py::list out;
        for (const auto& rec : r.records()) out.append(record_to_dict(rec));
        return out;
      });

  m.def(
      "gaussianize",
      [](std::shared_ptr<TargetDistribution> target, std::size_t iterations, const std::string& strategy,
         const std::string& family, int knots, double bound, long mc_batch, int steps, double learning_rate,
         double var_threshold, long h_samples, std::uint64_t seed) {
        GaussianizationOptions o;
        o.family = parse_family(family, knots, bound);
        o.mfvi.mc_batch = mc_batch;
        o.mfvi.steps = steps;
        o.mfvi.learning_rate = learning_rate;
        o.mfvi.validate();
        return run_gaussianization(target, iterations, parse_strategy(strategy, var_threshold, h_samples), o, seed);
      },
      py::arg("target"), py::arg("iterations") = 1, py::arg("strategy") = "pca", py::arg("family") = "spline",
      py::arg("knots") = 10, py::arg("bound") = 8.0, py::arg("mc_batch") = 1000, py::arg("steps") = 100,
      py::arg("learning_rate") = 0.01, py::arg("var_threshold") = 0.95, py::arg("h_samples") = 1000,
      py::arg("seed") = 0, "Run the rotate-then-MFVI iteration and return the fitted run.");

  // ---- diagnostics
  m.def("kl_gaussian_analytic", &kl_gaussian_analytic, py::arg("sigma_eigenvalues"));
  m.def(
      "gaussian_mf_step",
      [](const Matrix& sigma, const Matrix& rotation) {
        const GaussianMfStep s = gaussian_mf_step(sigma, rotation);
        return py::make_tuple(s.kl, s.next_sigma);
      },
      py::arg("sigma"), py::arg("rotation"));
  m.def(
      "iterations_to_threshold",
      [](Eigen::Index d, double kappa, const std::string& strategy, double threshold, long replicates,
         std::uint64_t seed, int threads, double var_threshold) {
        const SweepCell c =
            iterations_to_threshold(d, kappa, parse_strategy(strategy, var_threshold, 1000), threshold, replicates,
                                    seed, threads);
        py::dict out;
        out["mean_iters"] = c.mean_iters;
        out["sd_iters"] = c.sd_iters;
        out["replicates"] = c.replicates;
        out["censored"] = c.censored;
        out["counts"] = c.counts;
        return out;
      },
      py::arg("d"), py::arg("kappa"), py::arg("strategy") = "pca", py::arg("threshold") = 0.01,
      py::arg("replicates") = 30, py::arg("seed") = 0, py::arg("threads") = 1, py::arg("var_threshold") = 0.95);
  m.def(
      "mmd",
      [](const Matrix& x, const Matrix& y) {
        const MmdResult r = mmd_unbiased(x, y);
        return py::make_tuple(r.mmd2, r.bandwidth);
      },
      py::arg("x"), py::arg("y"), "Unbiased MMD^2 with a median-heuristic Gaussian kernel; returns (mmd2, bandwidth).");
  m.def("ksd", py::overload_cast<const Matrix&, const Matrix&>(&ksd), py::arg("x"), py::arg("scores"));
  m.def("ess", &ess, py::arg("weights"));
  m.def(
      "evaluate",
      [](const TransportChain& chain, const TargetDistribution& target, const Matrix& reference, long n,
         std::uint64_t seed) {
        RandomStream rng(seed);
        return metrics_to_dict(evaluate_chain(chain, target, reference, rng, {n}));
      },
      py::arg("chain"), py::arg("target"), py::arg("reference"), py::arg("eval_samples") = 2000, py::arg("seed") = 0);

  // ---- configuration-driven runs
  m.def(
      "validate_config",
      [](const std::string& text) { return config_to_json(config_from_json(parse_json(text))).dump(); },
      py::arg("config_json"), "Validate a configuration and return it with every default filled in.");
  m.def(
      "config_hash", [](const std::string& text) { return config_hash(config_from_json(parse_json(text))); },
      py::arg("config_json"));
  m.def(
      "run_config",
      [](const std::string& text) {
        const RunConfig c = config_from_json(parse_json(text));
        if (c.experiment != RunConfig::Experiment::custom) throw ConfigError("run_config expects a custom experiment");
        CustomResult r;
        {
          py::gil_scoped_release release;
          r = run_custom(c);
        }
        py::list metrics;
        for (const auto& row : r.metrics) metrics.append(metrics_to_dict(row));
        return py::make_tuple(saved_run_to_json(r.saved).dump(), metrics);
      },
      py::arg("config_json"), "Run a custom configuration; returns (saved_run_json, metrics).");
}
