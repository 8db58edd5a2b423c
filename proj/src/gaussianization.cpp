#include "igauss/gaussianization.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace igauss {

void RotationStrategy::validate() const {
  require(var_threshold > 0.0 && var_threshold <= 1.0, "RotationStrategy: var_threshold must lie in (0, 1]");
  require(h_samples >= 2, "RotationStrategy: h_samples must be >= 2");
}

std::string RotationStrategy::name() const {
  switch (kind) {
    case Kind::pca:
      return "pca";
    case Kind::random:
      return "random";
    case Kind::identity:
      return "identity";
  }
  return "unknown";
}

RotationStrategy RotationStrategy::parse(const std::string& name) {
  if (name == "pca") return pca();
  if (name == "random") return random();
  if (name == "identity") return identity();
  throw ContractViolation("unknown rotation strategy '" + name + "'");
}

GaussianizationRun::GaussianizationRun(TargetPtr base, std::uint64_t seed)
    : base_(std::move(base)), seed_(seed), chain_(base_ ? base_->dim() : 0) {
  require(base_ != nullptr, "GaussianizationRun: null base target");
}

GaussianizationRun GaussianizationRun::prefix(std::size_t k) const {
  GaussianizationRun out(base_, seed_);
  out.chain_ = chain_.prefix(k);
  out.records_.assign(records_.begin(), records_.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

void GaussianizationRun::append(TransportLayer layer, IterationRecord record) {
  chain_.push_back(std::move(layer));
  records_.push_back(std::move(record));
}

GaussianizationRun GaussianizationRun::restore(TargetPtr base, std::uint64_t seed, TransportChain chain,
                                               std::vector<IterationRecord> records) {
  require(chain.size() == records.size(), "GaussianizationRun::restore: record count must equal chain length");
  GaussianizationRun out(std::move(base), seed);
  if (!chain.empty()) require_dim(chain.dim(), out.dim(), "GaussianizationRun::restore");
  out.chain_ = std::move(chain);
  out.records_ = std::move(records);
  return out;
}

bool run_iteration(GaussianizationRun& run, const RotationStrategy& strategy, const GaussianizationOptions& opts) {
  strategy.validate();
  const Eigen::Index d = run.dim();
  const std::uint64_t k = run.iterations();
  const RandomStream iter_stream = RandomStream(run.seed()).split(k);
  auto current = std::make_shared<const PullbackTarget>(run.current_target());

  IterationRecord record;
  record.strategy = strategy.name();
  Rotation rotation;
  switch (strategy.kind) {
    case RotationStrategy::Kind::identity:
      rotation = Rotation::identity(d);
      break;
    case RotationStrategy::Kind::random: {
      RandomStream rs = iter_stream.split(1);
      rotation = sample_haar_rotation(d, rs);
      record.rank = d;
      break;
    }
    case RotationStrategy::Kind::pca: {
      // Fresh draws for H, independent of the MFVI training batch.
      RandomStream hs = iter_stream.split(0);
      const HMatrix h = estimate_H(*current, strategy.h_samples, hs);
      const EigenDecomposition eig = eig_sym(h);
      if (opts.early_stop_eigen_threshold > 0.0 &&
          eig.values.lpNorm<Eigen::Infinity>() < opts.early_stop_eigen_threshold) {
        run.mark_stopped_early();
        return false;
      }
      RotationChoice choice = select_rotation_compact(eig, strategy.var_threshold);
      rotation = std::move(choice.rotation);
      record.rank = choice.rank;
      record.eigenvalues = eig.values;
      break;
    }
  }

  const RotatedTarget rotated(rotation, current);
  MfviOptions mfvi = opts.mfvi;
  mfvi.seed = iter_stream.split(2).seed();
  MfviResult fit = train_mfvi(rotated, opts.family, mfvi);

  record.loss_trace = std::move(fit.loss_trace);
  // Training loss uses the unnormalized reference density; restore its constant.
  record.elbo = -fit.final_loss + 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  record.restarted = fit.restarted;
  run.append(TransportLayer(std::move(rotation), std::move(fit.map)), std::move(record));
  return true;
}

void extend_run(GaussianizationRun& run, std::size_t total_iterations, const RotationStrategy& strategy,
                const GaussianizationOptions& opts) {
  while (run.iterations() < total_iterations && !run.stopped_early()) {
    if (!run_iteration(run, strategy, opts)) break;
  }
}

GaussianizationRun run_gaussianization(TargetPtr base, std::size_t iterations, const RotationStrategy& strategy,
                                       const GaussianizationOptions& opts, std::uint64_t seed) {
  GaussianizationRun run(std::move(base), seed);
  extend_run(run, iterations, strategy, opts);
  return run;
}

double log_std_normal(const Vector& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi);
}

QSamples sample_q(const TransportChain& chain, long n, RandomStream& rng) {
  require(n >= 1, "sample_q: n must be >= 1");
  const Eigen::Index d = chain.dim();
  require(d >= 1, "sample_q: chain has no dimension");
  QSamples out{Matrix(n, d), Vector(n)};
  for (long i = 0; i < n; ++i) {
    const Vector z = rng.normal_vector(d);
    auto [x, logdet] = chain.push_forward(z);
    out.x.row(i) = x.transpose();
    out.log_q(i) = log_std_normal(z) - logdet;
  }
  return out;
}

double log_q(const TransportChain& chain, const Vector& x) {
  auto [z, logdet] = chain.pull_back(x);
  return log_std_normal(z) + logdet;
}

Vector importance_weights_from_log_ratios(const Vector& log_ratios) {
  require(log_ratios.size() >= 1, "importance_weights: no samples");
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < log_ratios.size(); ++i) {
    if (std::isnan(log_ratios(i))) continue;
    mx = std::max(mx, log_ratios(i));
  }
  if (!std::isfinite(mx)) throw NumericalError("importance_weights: all weights are zero or NaN");
  Vector w(log_ratios.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::isnan(log_ratios(i)) ? 0.0 : std::exp(log_ratios(i) - mx);
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("importance_weights: degenerate weights");
  return w / total;
}

Vector importance_weights(const TargetDistribution& target, const Matrix& x, const Vector& log_q_values) {
  require_dim(log_q_values.size(), x.rows(), "importance_weights");
  Vector lr(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) lr(i) = target.log_density(x.row(i).transpose()) - log_q_values(i);
  return importance_weights_from_log_ratios(lr);
}

}  // namespace igauss
