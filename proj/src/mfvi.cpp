#include "igauss/mfvi.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace igauss {

void MfviOptions::validate() const {
  require(mc_batch >= 2, "MfviOptions: mc_batch must be >= 2");
  require(steps >= 1, "MfviOptions: steps must be positive");
  require(learning_rate > 0, "MfviOptions: learning_rate must be positive");
  require(adam_beta1 > 0 && adam_beta1 < 1 && adam_beta2 > 0 && adam_beta2 < 1, "MfviOptions: Adam betas in (0,1)");
  require(adam_eps > 0, "MfviOptions: adam_eps must be positive");
}

namespace {

std::string describe_sample(const Vector& v) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << "]";
  return os.str();
}

// Per-sample objective terms; fills the batch of mapped points and target scores.
struct BatchPass {
  Vector per_sample;
  Matrix scores;
};

BatchPass evaluate_batch(const CoordinatewiseMap& map, const TargetDistribution& target, const Matrix& z) {
  require(z.rows() >= 1, "reverse_kl: empty batch");
  require_dim(z.cols(), map.dim(), "reverse_kl batch");
  require_dim(target.dim(), map.dim(), "reverse_kl target");
  const Eigen::Index n = z.rows();
  BatchPass out{Vector(n), Matrix(n, z.cols())};
  Vector s;
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vector zr = z.row(r).transpose();
    const CoordEval e = map.evaluate(zr);
    const double lp = target.log_density_and_score(e.y, s);
    if (!std::isfinite(lp) || !s.allFinite()) {
      throw MfviError("reverse_kl: non-finite target log-density or score at mapped sample " + describe_sample(e.y), {});
    }
    out.per_sample(r) = -0.5 * zr.squaredNorm() - e.logdet() - lp;
    out.scores.row(r) = s.transpose();
  }
  return out;
}

}  // namespace

McEstimate reverse_kl_estimate(const CoordinatewiseMap& map, const TargetDistribution& target, const Matrix& z_batch) {
  const BatchPass pass = evaluate_batch(map, target, z_batch);
  const double n = static_cast<double>(pass.per_sample.size());
  const double mean = pass.per_sample.mean();
  double se = 0.0;
  if (pass.per_sample.size() > 1) {
    const double var = (pass.per_sample.array() - mean).square().sum() / (n - 1.0);
    se = std::sqrt(var / n);
  }
  return {mean, se};
}

double reverse_kl_value_and_gradient(const CoordinatewiseMap& map, const TargetDistribution& target,
                                     const Matrix& z_batch, Vector& grad) {
  const BatchPass pass = evaluate_batch(map, target, z_batch);
  const double inv_n = 1.0 / static_cast<double>(z_batch.rows());
  grad = Vector::Zero(map.param_count());
  const Matrix wF = -inv_n * pass.scores;
  const Matrix wlog = Matrix::Constant(z_batch.rows(), z_batch.cols(), -inv_n);
  map.accumulate_vjp(z_batch, wF, wlog, grad);
  return pass.per_sample.mean();
}

Vector reverse_kl_gradient(const CoordinatewiseMap& map, const TargetDistribution& target, const Matrix& z_batch) {
  Vector g;
  reverse_kl_value_and_gradient(map, target, z_batch, g);
  return g;
}

MfviResult train_mfvi(const TargetDistribution& target, const MapFamily& family, const MfviOptions& opts) {
  opts.validate();
  const Eigen::Index d = target.dim();
  RandomStream rng(opts.seed);
  const Matrix z = rng.normal_matrix(opts.mc_batch, d);

  double lr = opts.learning_rate;
  bool restarted = false;
  for (int attempt = 0; attempt < 2; ++attempt) {
    MfviResult result{CoordinatewiseMap::identity(d, family), {}, 0.0, lr, restarted};
    Vector params = result.map.params();
    AdamState state(params.size());
    AdamOptions adam = opts.adam();
    adam.learning_rate = lr;
    Vector grad;
    bool diverged = false;
    double initial = 0.0;
    for (int step = 0; step < opts.steps; ++step) {
      double loss = 0.0;
      try {
        loss = reverse_kl_value_and_gradient(result.map, target, z, grad);
      } catch (const MfviError& e) {
        throw MfviError(e.what(), result.loss_trace);
      }
      if (step == 0) initial = loss;
      result.loss_trace.push_back(loss);
      const bool blown = !std::isfinite(loss) || !grad.allFinite() ||
                         loss - initial > 10.0 * std::max(std::abs(initial), 1.0);
      if (blown) {
        diverged = true;
        break;
      }
      adam_step(state, params, grad, adam);
      result.map.set_params(params);
    }
    if (!diverged) {
      try {
        result.final_loss = reverse_kl_estimate(result.map, target, z).value;
      } catch (const MfviError& e) {
        throw MfviError(e.what(), result.loss_trace);
      }
      if (std::isfinite(result.final_loss)) return result;
    }
    if (!opts.divergence_guard || attempt == 1) {
      throw MfviError("train_mfvi: objective diverged", result.loss_trace);
    }
    lr *= 0.5;
    restarted = true;
  }
  throw MfviError("train_mfvi: unreachable", {});
}

McEstimate mf_optimality_residual(const CoordinatewiseMap& map, const TargetDistribution& target, long n_samples,
                                  RandomStream& rng) {
  require(n_samples >= 1000, "mf_optimality_residual: need at least 1000 samples");
  const Eigen::Index d = target.dim();
  require_dim(map.dim(), d, "mf_optimality_residual");
  constexpr int kGroups = 20;
  const int B = kResidualBins;

  // sums[g][i][b] and counts, with g the jackknife group.
  std::vector<double> sums(static_cast<std::size_t>(kGroups * d * B), 0.0);
  std::vector<double> counts(static_cast<std::size_t>(kGroups * d * B), 0.0);
  auto idx = [&](int g, Eigen::Index i, int b) { return static_cast<std::size_t>((g * d + i) * B + b); };

  Vector s;
  for (long n = 0; n < n_samples; ++n) {
    const int g = static_cast<int>(n % kGroups);
    const Vector z = rng.normal_vector(d);
    const CoordEval e = map.evaluate(z);
    target.log_density_and_score(e.y, s);
    // Relative score of the transformed target F^{-1}#p at z.
    const Vector h = s.cwiseProduct(e.log_deriv.array().exp().matrix()) + e.dlog_deriv_dx + z;
    for (Eigen::Index i = 0; i < d; ++i) {
      const double u = 0.5 * std::erfc(-z(i) / std::sqrt(2.0));
      const int b = std::clamp(static_cast<int>(u * B), 0, B - 1);
      sums[idx(g, i, b)] += h(i);
      counts[idx(g, i, b)] += 1.0;
    }
  }

  auto estimate_without = [&](int skip) {
    double total = 0.0;
    double n_tot = 0.0;
    for (int g = 0; g < kGroups; ++g)
      if (g != skip)
        for (int b = 0; b < B; ++b) n_tot += counts[idx(g, 0, b)];
    for (Eigen::Index i = 0; i < d; ++i) {
      for (int b = 0; b < B; ++b) {
        double sm = 0.0;
        double ct = 0.0;
        for (int g = 0; g < kGroups; ++g) {
          if (g == skip) continue;
          sm += sums[idx(g, i, b)];
          ct += counts[idx(g, i, b)];
        }
        if (ct > 0) total += (ct / n_tot) * (sm / ct) * (sm / ct);
      }
    }
    return total;
  };

  const double full = estimate_without(-1);
  std::vector<double> loo(kGroups);
  double mean = 0.0;
  for (int g = 0; g < kGroups; ++g) {
    loo[static_cast<std::size_t>(g)] = estimate_without(g);
    mean += loo[static_cast<std::size_t>(g)] / kGroups;
  }
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  return {full, std::sqrt((kGroups - 1.0) / kGroups * ss)};
}

}  // namespace igauss
