#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "igauss/gaussianization.hpp"

namespace igauss {

// Kernel choices reported in every metrics sidecar.
inline constexpr const char* kMmdKernel = "gaussian_rbf(median_heuristic)";
inline constexpr const char* kKsdKernel = "imq(c=1,beta=-0.5)";
inline constexpr double kBandwidthFloor = 1e-12;

struct MetricsRecord {
  std::string run_id;
  long k = 0;
  double elbo = 0.0;
  double mmd = 0.0;
  double ksd = 0.0;
  double ess = 0.0;
  std::optional<double> kl_analytic;
  bool failed = false;
  /// Seed of the replicate stream that produced the row.
  std::uint64_t seed = 0;
  /// Median-heuristic bandwidth used for mmd (sidecar metadata, not a CSV column).
  double mmd_bandwidth = 0.0;
};

/// KL(gamma || N(0, Sigma)) from the eigenvalues of Sigma.
double kl_gaussian_analytic(const Vector& sigma_eigvals);

struct GaussianMfStep {
  /// KL after the exact mean-field fit of N(0, R Sigma R^T); equals KL(gamma || N(0, next_sigma)).
  double kl = 0.0;
  /// Covariance of the transformed target S^{-1/2} R Sigma R^T S^{-1/2} (unit-diagonal precision).
  Matrix next_sigma;
};

/// Exact rotate-then-MFVI update for a centered Gaussian with covariance Sigma.
GaussianMfStep gaussian_mf_step(const Matrix& sigma, const Matrix& rotation);

/// Exact KL(q || N(m, S)) when every layer of the chain is affine; nullopt otherwise.
std::optional<double> affine_gaussian_kl(const TransportChain& chain, const GaussianTarget& g);

/// Post-MFVI KL for Sigma with unit-diagonal precision under rotation R.
double kl_gaussian_after_mf(const Matrix& sigma, const Rotation& r);

struct MmdResult {
  double mmd2 = 0.0;
  double bandwidth = 0.0;
};

/// Unbiased MMD^2 with a Gaussian RBF kernel; bandwidth is the median pairwise
/// distance of the pooled sample (floored at kBandwidthFloor).
MmdResult mmd_unbiased(const Matrix& x, const Matrix& y);
double median_pairwise_distance(const Matrix& pooled);

/// V-statistic kernelized Stein discrepancy (square root of the V-statistic)
/// with the IMQ base kernel (1 + |x-y|^2)^{-1/2}.
double ksd(const Matrix& x, const Matrix& scores);
double ksd(const Matrix& x, const TargetDistribution& target);
/// Stein kernel k_p(x, y) for the IMQ base kernel.
double stein_kernel_imq(const Vector& x, const Vector& y, const Vector& sx, const Vector& sy);

/// (sum w)^2 / sum w^2.
double ess(const Vector& weights);

struct SweepCell {
  double mean_iters = 0.0;
  double sd_iters = 0.0;
  long replicates = 0;
  long censored = 0;
  std::vector<long> counts;
};

inline constexpr long kIterationCap = 10000;

/// Exact Gaussian recursion: rotate, apply the exact mean-field fit, repeat
/// until KL(gamma || p^(k)) < threshold. Counts are averaged over replicates,
/// each with Sigma from make_conditioned_gaussian. Replicate r uses
/// RandomStream(seed).split(r).
SweepCell iterations_to_threshold(Eigen::Index d, double kappa, const RotationStrategy& strategy,
                                  double threshold = 0.01, long replicates = 30, std::uint64_t seed = 0,
                                  int threads = 1);
/// Iterations for one covariance.
long iterations_to_threshold_single(const Matrix& sigma, const RotationStrategy& strategy, double threshold,
                                    RandomStream& rng, long cap = kIterationCap);

struct RwmOptions {
  long burn_in = 5000;
  long thin = 25;
  int chains = 4;
  /// Proposal scale multiplier applied to the preconditioner (2.38 / sqrt(d) when <= 0).
  double step_scale = 0.0;
};

/// Random-walk Metropolis reference draws with proposal covariance
/// step_scale^2 * L L^T; rows are samples, chains concatenated in order.
Matrix rwm_reference_samples(const TargetDistribution& target, long n, const Matrix& precond_chol, RandomStream& rng,
                             const RwmOptions& opts = {});

struct EvaluationOptions {
  long eval_samples = 2000;
};

/// ELBO, MMD against `reference`, KSD and ESS for the run's q^(k) on fresh draws.
MetricsRecord evaluate_chain(const TransportChain& chain, const TargetDistribution& target, const Matrix& reference,
                             RandomStream& rng, const EvaluationOptions& opts = {});

/// Column order: run_id,k,elbo,mmd,ksd,ess,kl_analytic,seed. Failed rows carry nan metrics and "failed".
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);
/// 17 significant digits.
std::string format_double(double v);

}  // namespace igauss
