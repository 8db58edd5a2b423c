#include "igauss/target.hpp"

#include <cmath>
#include <iostream>

#include "igauss/adam.hpp"

namespace igauss {

// ---------------------------------------------------------------------------
// Gaussian

GaussianTarget::GaussianTarget(Vector mean, Matrix covariance)
    : mean_(std::move(mean)), covariance_(std::move(covariance)) {
  const auto d = mean_.size();
  require(d >= 1, "GaussianTarget: empty mean");
  require(covariance_.rows() == d && covariance_.cols() == d, "GaussianTarget: covariance shape");
  covariance_ = 0.5 * (covariance_ + covariance_.transpose()).eval();
  Eigen::LLT<Matrix> llt(covariance_);
  if (llt.info() != Eigen::Success) throw ContractViolation("GaussianTarget: covariance not positive definite");
  chol_ = llt.matrixL();
  precision_ = llt.solve(Matrix::Identity(d, d));
  precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
}

double GaussianTarget::log_density(const Vector& x) const {
  require_dim(x.size(), dim(), "gaussian_log_density");
  const Vector r = x - mean_;
  return -0.5 * r.dot(precision_ * r);
}

Vector GaussianTarget::score(const Vector& x) const {
  require_dim(x.size(), dim(), "gaussian_score");
  return -(precision_ * (x - mean_));
}

double GaussianTarget::log_density_and_score(const Vector& x, Vector& score_out) const {
  require_dim(x.size(), dim(), "gaussian_log_density");
  const Vector r = x - mean_;
  score_out = -(precision_ * r);
  return 0.5 * r.dot(score_out);
}

double gaussian_log_density(const GaussianTarget& t, const Vector& x) { return t.log_density(x); }
Vector gaussian_score(const GaussianTarget& t, const Vector& x) { return t.score(x); }

// ---------------------------------------------------------------------------
// Logistic regression

double log_sigmoid(double t) {
  // log S(t) = -log(1 + e^{-t}); branch keeps the exponent non-positive.
  if (t >= 0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

LogisticRegressionTarget::LogisticRegressionTarget(Matrix design, Vector labels, double prior_sigma)
    : design_(std::move(design)), labels_(std::move(labels)), prior_sigma_(prior_sigma) {
  require(design_.cols() >= 1, "LogisticRegressionTarget: empty design");
  require_dim(labels_.size(), design_.rows(), "LogisticRegressionTarget labels");
  require(prior_sigma_ > 0, "LogisticRegressionTarget: prior_sigma must be positive");
  for (Eigen::Index i = 0; i < labels_.size(); ++i)
    require(labels_(i) == 0.0 || labels_(i) == 1.0, "LogisticRegressionTarget: labels must be 0/1");
}

double LogisticRegressionTarget::log_density(const Vector& beta) const {
  require_dim(beta.size(), dim(), "logistic_log_density");
  const Vector logits = design_ * beta;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    // log(1 - S(t)) = log S(-t)
    acc += labels_(i) > 0.5 ? log_sigmoid(logits(i)) : log_sigmoid(-logits(i));
  }
  return acc - beta.squaredNorm() / (2.0 * prior_sigma_ * prior_sigma_);
}

Vector LogisticRegressionTarget::score(const Vector& beta) const {
  Vector s;
  log_density_and_score(beta, s);
  return s;
}

double LogisticRegressionTarget::log_density_and_score(const Vector& beta, Vector& score_out) const {
  require_dim(beta.size(), dim(), "logistic_log_density");
  const Vector logits = design_ * beta;
  Vector resid(logits.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    acc += labels_(i) > 0.5 ? log_sigmoid(logits(i)) : log_sigmoid(-logits(i));
    resid(i) = labels_(i) - sigmoid(logits(i));
  }
  const double inv_var = 1.0 / (prior_sigma_ * prior_sigma_);
  score_out = design_.transpose() * resid - inv_var * beta;
  return acc - 0.5 * inv_var * beta.squaredNorm();
}

double logistic_log_density(const LogisticRegressionTarget& t, const Vector& beta) { return t.log_density(beta); }
Vector logistic_score(const LogisticRegressionTarget& t, const Vector& beta) { return t.score(beta); }

// ---------------------------------------------------------------------------
// Constructors for the built-in experiments

Vector log_spaced(Eigen::Index d, double lo, double hi) {
  require(d >= 1 && lo > 0 && hi >= lo, "log_spaced: invalid range");
  Vector v(d);
  if (d == 1) {
    v(0) = std::sqrt(lo * hi);
    return v;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(d - 1));
  v(0) = lo;
  v(d - 1) = hi;
  return v;
}

Matrix random_spd_with_spectrum(const Vector& eigenvalues, RandomStream& rng) {
  const auto d = eigenvalues.size();
  const Matrix g = rng.normal_matrix(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  Matrix s = q * eigenvalues.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

GaussianTarget make_conditioned_gaussian(Eigen::Index d, double kappa, RandomStream& rng) {
  require(d >= 2, "make_conditioned_gaussian: d must be >= 2");
  require(kappa >= 1.0, "make_conditioned_gaussian: kappa must be >= 1");
  const double root = std::sqrt(kappa);
  const Vector eig = log_spaced(d, 1.0 / root, root);
  return GaussianTarget(Vector::Zero(d), random_spd_with_spectrum(eig, rng));
}

LogisticRegressionTarget make_logistic_benchmark(RandomStream& rng, const LogisticDataOptions& opts) {
  const Vector eig = log_spaced(opts.d, opts.covariate_eig_lo, opts.covariate_eig_hi);
  const Matrix cov = random_spd_with_spectrum(eig, rng);
  const Matrix chol = Eigen::LLT<Matrix>(cov).matrixL();
  Matrix design(opts.n, opts.d);
  for (Eigen::Index i = 0; i < opts.n; ++i) design.row(i) = (chol * rng.normal_vector(opts.d)).transpose();
  Vector labels(opts.n);
  for (Eigen::Index i = 0; i < opts.n; ++i) labels(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return LogisticRegressionTarget(std::move(design), std::move(labels), opts.prior_sigma);
}

// ---------------------------------------------------------------------------
// Standardization

StandardizedTarget::StandardizedTarget(TargetPtr base, Vector shift, Vector scale)
    : base_(std::move(base)), shift_(std::move(shift)), scale_(std::move(scale)) {
  require(base_ != nullptr, "StandardizedTarget: null base");
  require_dim(shift_.size(), base_->dim(), "StandardizedTarget shift");
  require_dim(scale_.size(), base_->dim(), "StandardizedTarget scale");
  require((scale_.array() > 0).all(), "StandardizedTarget: scale must be positive");
  log_scale_sum_ = scale_.array().log().sum();
}

double StandardizedTarget::log_density(const Vector& u) const {
  return base_->log_density(to_original(u)) + log_scale_sum_;
}

Vector StandardizedTarget::score(const Vector& u) const {
  return scale_.cwiseProduct(base_->score(to_original(u)));
}

double StandardizedTarget::log_density_and_score(const Vector& u, Vector& score_out) const {
  Vector s;
  const double lp = base_->log_density_and_score(to_original(u), s);
  score_out = scale_.cwiseProduct(s);
  return lp + log_scale_sum_;
}

Matrix finite_difference_hessian(const TargetDistribution& t, const Vector& x, double step) {
  const auto d = t.dim();
  Matrix h(d, d);
  Vector xp = x;
  Vector xm = x;
  for (Eigen::Index j = 0; j < d; ++j) {
    xp(j) = x(j) + step;
    xm(j) = x(j) - step;
    h.col(j) = (t.score(xp) - t.score(xm)) / (2.0 * step);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return 0.5 * (h + h.transpose());
}

LaplaceResult laplace_standardize(TargetPtr t, const OptimizerOptions& opts) {
  require(t != nullptr, "laplace_standardize: null target");
  require(opts.max_steps > 0, "laplace_standardize: optimizer budget must be positive");
  const auto d = t->dim();

  LaplaceResult out;
  Vector x = Vector::Zero(d);
  AdamState state(d);
  AdamOptions adam{opts.learning_rate, 0.9, 0.999, 1e-8};
  int steps = 0;
  for (; steps < opts.max_steps; ++steps) {
    const Vector s = t->score(x);
    if (s.lpNorm<Eigen::Infinity>() < opts.score_tolerance) break;
    adam_step(state, x, -s, adam);
  }

  // Adam at a fixed learning rate stalls near the mode; finish with damped
  // Newton steps on the finite-difference Hessian.
  for (int it = 0; it < opts.newton_polish_steps; ++it) {
    const Vector s = t->score(x);
    if (s.lpNorm<Eigen::Infinity>() < opts.score_tolerance) break;
    const Matrix neg_hess = -finite_difference_hessian(*t, x, opts.hessian_step);
    Eigen::LLT<Matrix> llt(neg_hess);
    if (llt.info() != Eigen::Success) break;
    const Vector dx = llt.solve(s);
    double step = 1.0;
    const double lp0 = t->log_density(x);
    while (step > 1e-4 && !(t->log_density(x + step * dx) >= lp0 - 1e-12)) step *= 0.5;
    x += step * dx;
    ++steps;
  }

  out.steps = steps;
  out.score_norm_inf = t->score(x).lpNorm<Eigen::Infinity>();
  const Matrix u_hess = -finite_difference_hessian(*t, x, opts.hessian_step);
  Eigen::LLT<Matrix> llt(u_hess);
  Vector scale = Vector::Ones(d);
  if (llt.info() == Eigen::Success) {
    out.covariance = llt.solve(Matrix::Identity(d, d));
    for (Eigen::Index i = 0; i < d; ++i) {
      const double c = out.covariance(i, i);
      if (c > 0 && std::isfinite(c)) {
        scale(i) = std::sqrt(c);
      } else {
        out.fallback_coordinates.push_back(i);
      }
    }
  } else {
    out.hessian_positive_definite = false;
    out.covariance = Matrix::Identity(d, d);
    // Use the diagonal where it is usable on its own.
    for (Eigen::Index i = 0; i < d; ++i) {
      if (u_hess(i, i) > 0 && std::isfinite(u_hess(i, i))) {
        scale(i) = 1.0 / std::sqrt(u_hess(i, i));
      } else {
        out.fallback_coordinates.push_back(i);
      }
    }
    std::cerr << "laplace_standardize: Hessian of -log p is not positive definite at the located point; "
              << out.fallback_coordinates.size() << " coordinate(s) fall back to unit scale\n";
  }
  out.shift = x;
  out.scale = scale;
  out.target = std::make_shared<StandardizedTarget>(t, x, scale);
  return out;
}

}  // namespace igauss
