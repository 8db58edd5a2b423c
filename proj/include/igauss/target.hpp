#pragma once

#include <memory>
#include <string>
#include <vector>

#include "igauss/random.hpp"
#include "igauss/types.hpp"

namespace igauss {

/// Unnormalized target density p(x) on R^d. All log-densities in this library
/// are defined up to an additive constant; implementations must be
/// immutable after construction so concurrent evaluation is safe.
class TargetDistribution {
 public:
  virtual ~TargetDistribution() = default;

  virtual Eigen::Index dim() const = 0;
  virtual double log_density(const Vector& x) const = 0;
  /// Gradient of log_density.
  virtual Vector score(const Vector& x) const = 0;

  /// Both at once; override when the two share work.
  virtual double log_density_and_score(const Vector& x, Vector& score_out) const {
    score_out = score(x);
    return log_density(x);
  }

  virtual std::string name() const { return "target"; }
};

using TargetPtr = std::shared_ptr<const TargetDistribution>;

class GaussianTarget final : public TargetDistribution {
 public:
  GaussianTarget(Vector mean, Matrix covariance);

  Eigen::Index dim() const override { return mean_.size(); }
  double log_density(const Vector& x) const override;
  Vector score(const Vector& x) const override;
  double log_density_and_score(const Vector& x, Vector& score_out) const override;
  std::string name() const override { return "gaussian"; }

  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  const Matrix& precision() const { return precision_; }
  /// Lower-triangular L with covariance = L L^T.
  const Matrix& chol() const { return chol_; }

 private:
  Vector mean_;
  Matrix covariance_;
  Matrix precision_;
  Matrix chol_;
};

class LogisticRegressionTarget final : public TargetDistribution {
 public:
  LogisticRegressionTarget(Matrix design, Vector labels, double prior_sigma);

  Eigen::Index dim() const override { return design_.cols(); }
  double log_density(const Vector& beta) const override;
  Vector score(const Vector& beta) const override;
  double log_density_and_score(const Vector& beta, Vector& score_out) const override;
  std::string name() const override { return "logistic"; }

  const Matrix& design() const { return design_; }
  const Vector& labels() const { return labels_; }
  double prior_sigma() const { return prior_sigma_; }

 private:
  Matrix design_;
  Vector labels_;
  double prior_sigma_;
};

/// log S(t) without overflow for large |t|.
double log_sigmoid(double t);
double sigmoid(double t);

double gaussian_log_density(const GaussianTarget& t, const Vector& x);
Vector gaussian_score(const GaussianTarget& t, const Vector& x);
double logistic_log_density(const LogisticRegressionTarget& t, const Vector& beta);
Vector logistic_score(const LogisticRegressionTarget& t, const Vector& beta);

/// Symmetric matrix U diag(eigenvalues) U^T with U Haar distributed.
Matrix random_spd_with_spectrum(const Vector& eigenvalues, RandomStream& rng);

/// Eigenvalues of length d equally log-spaced on [lo, hi].
Vector log_spaced(Eigen::Index d, double lo, double hi);

/// Centered Gaussian whose covariance has eigenvalues log-spaced on
/// [1/sqrt(kappa), sqrt(kappa)], so the condition number is exactly kappa.
GaussianTarget make_conditioned_gaussian(Eigen::Index d, double kappa, RandomStream& rng);

struct LogisticDataOptions {
  Eigen::Index n = 20;
  Eigen::Index d = 10;
  double prior_sigma = 2.0;
  double covariate_eig_lo = 0.1;
  double covariate_eig_hi = 10.0;
};

/// Synthetic logistic-regression posterior: covariates N(0, U D U^T) with D
/// log-spaced, labels i.i.d. Bernoulli(1/2).
LogisticRegressionTarget make_logistic_benchmark(RandomStream& rng, const LogisticDataOptions& opts = {});

/// Target reparameterized as u -> shift + scale * u (coordinatewise). The
/// log-density includes sum(log scale) so ELBOs agree with the original target.
class StandardizedTarget final : public TargetDistribution {
 public:
  StandardizedTarget(TargetPtr base, Vector shift, Vector scale);

  Eigen::Index dim() const override { return shift_.size(); }
  double log_density(const Vector& u) const override;
  Vector score(const Vector& u) const override;
  double log_density_and_score(const Vector& u, Vector& score_out) const override;
  std::string name() const override { return "standardized(" + base_->name() + ")"; }

  Vector to_original(const Vector& u) const { return shift_ + scale_.cwiseProduct(u); }
  Vector from_original(const Vector& x) const { return (x - shift_).cwiseQuotient(scale_); }
  const Vector& shift() const { return shift_; }
  const Vector& scale() const { return scale_; }
  const TargetPtr& base() const { return base_; }

 private:
  TargetPtr base_;
  Vector shift_;
  Vector scale_;
  double log_scale_sum_;
};

struct OptimizerOptions {
  double learning_rate = 0.1;
  int max_steps = 500;
  double score_tolerance = 1e-6;
  double hessian_step = 1e-4;
  int newton_polish_steps = 20;
};

struct LaplaceResult {
  std::shared_ptr<const StandardizedTarget> target;
  Vector shift;
  Vector scale;
  /// Inverse Hessian of -log p at the mode (Laplace covariance).
  Matrix covariance;
  double score_norm_inf = 0.0;
  int steps = 0;
  /// Coordinates whose Hessian diagonal was not usable; their scale fell back to 1.
  std::vector<Eigen::Index> fallback_coordinates;
  bool hessian_positive_definite = true;
};

/// Central finite-difference Hessian of log p, built from the score and symmetrized.
Matrix finite_difference_hessian(const TargetDistribution& t, const Vector& x, double step);

/// Locate the mode of p and standardize by the diagonal of the inverse Hessian.
LaplaceResult laplace_standardize(TargetPtr t, const OptimizerOptions& opts = {});

}  // namespace igauss
