#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "igauss/chain.hpp"
#include "igauss/mfvi.hpp"
#include "igauss/score_pca.hpp"

namespace igauss {

struct RotationStrategy {
  enum class Kind { pca, random, identity };
  Kind kind = Kind::pca;
  double var_threshold = 0.95;
  long h_samples = 1000;

  static RotationStrategy pca(double var_threshold = 0.95, long h_samples = 1000) {
    return {Kind::pca, var_threshold, h_samples};
  }
  static RotationStrategy random() { return {Kind::random, 0.95, 1000}; }
  static RotationStrategy identity() { return {Kind::identity, 0.95, 1000}; }

  void validate() const;
  std::string name() const;
  static RotationStrategy parse(const std::string& name);
};

struct IterationRecord {
  std::string strategy;
  Eigen::Index rank = 0;
  /// Eigenvalues of the estimated H (pca only), descending magnitude.
  Vector eigenvalues;
  std::vector<double> loss_trace;
  /// ELBO of q^(k) on the training batch (unnormalized target).
  double elbo = 0.0;
  bool restarted = false;
};

struct GaussianizationOptions {
  MapFamily family = MapFamily::spline();
  MfviOptions mfvi;
  /// Stop early when every |eigenvalue| of the estimated H falls below this (pca only; 0 disables).
  double early_stop_eigen_threshold = 0.0;
};

/// The transport chain built so far, the untouched base target, and per-iteration diagnostics.
/// Iteration k draws all of its randomness from RandomStream(seed).split(k),
/// so extending a run reproduces a longer fresh run exactly.
class GaussianizationRun {
 public:
  GaussianizationRun(TargetPtr base, std::uint64_t seed);

  const TransportChain& chain() const { return chain_; }
  const TargetPtr& base() const { return base_; }
  const std::vector<IterationRecord>& records() const { return records_; }
  std::uint64_t seed() const { return seed_; }
  Eigen::Index dim() const { return base_->dim(); }
  std::size_t iterations() const { return chain_.size(); }
  bool stopped_early() const { return stopped_early_; }

  /// Current target p^(k): the base pulled back through the chain.
  PullbackTarget current_target() const { return PullbackTarget(chain_, base_); }
  /// Run truncated to its first k iterations.
  GaussianizationRun prefix(std::size_t k) const;

  void append(TransportLayer layer, IterationRecord record);
  void mark_stopped_early() { stopped_early_ = true; }

  /// Rebuild from a serialized chain and its records.
  static GaussianizationRun restore(TargetPtr base, std::uint64_t seed, TransportChain chain,
                                    std::vector<IterationRecord> records);

 private:
  TargetPtr base_;
  std::uint64_t seed_;
  TransportChain chain_;
  std::vector<IterationRecord> records_;
  bool stopped_early_ = false;
};

/// One iteration: choose R_k, fit F_k against the rotated current target, append (R_k, F_k).
/// On MFVI failure the run is left unchanged and the error propagates.
/// Returns false when the early-stop rule fired and nothing was appended.
bool run_iteration(GaussianizationRun& run, const RotationStrategy& strategy, const GaussianizationOptions& opts);

/// Extends `run` until it has `total_iterations` layers (no-op if it already does).
void extend_run(GaussianizationRun& run, std::size_t total_iterations, const RotationStrategy& strategy,
                const GaussianizationOptions& opts);

GaussianizationRun run_gaussianization(TargetPtr base, std::size_t iterations, const RotationStrategy& strategy,
                                       const GaussianizationOptions& opts, std::uint64_t seed);

/// Normalized standard Gaussian log-density.
double log_std_normal(const Vector& z);

struct QSamples {
  Matrix x;      // rows are samples
  Vector log_q;  // normalized log-density of q^(k) at each row
};

QSamples sample_q(const TransportChain& chain, long n, RandomStream& rng);
inline QSamples sample_q(const GaussianizationRun& run, long n, RandomStream& rng) {
  return sample_q(run.chain(), n, rng);
}

double log_q(const TransportChain& chain, const Vector& x);
inline double log_q(const GaussianizationRun& run, const Vector& x) { return log_q(run.chain(), x); }

/// Self-normalized importance weights w_i proportional to p(x_i) / q(x_i).
Vector importance_weights(const TargetDistribution& target, const Matrix& x, const Vector& log_q);
Vector importance_weights_from_log_ratios(const Vector& log_ratios);

}  // namespace igauss
