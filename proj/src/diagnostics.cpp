#include "igauss/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "igauss/parallel.hpp"

namespace igauss {

double kl_gaussian_analytic(const Vector& lambda) {
  require(lambda.size() >= 1, "kl_gaussian_analytic: empty spectrum");
  require((lambda.array() > 0).all(), "kl_gaussian_analytic: eigenvalues must be positive");
  return 0.5 * (lambda.array().log() + lambda.array().inverse() - 1.0).sum();
}

GaussianMfStep gaussian_mf_step(const Matrix& sigma, const Matrix& rotation) {
  require(sigma.rows() == sigma.cols() && rotation.rows() == sigma.rows() && rotation.cols() == sigma.cols(),
          "gaussian_mf_step: dimension mismatch");
  Matrix rotated = rotation * sigma * rotation.transpose();
  rotated = 0.5 * (rotated + rotated.transpose()).eval();
  Eigen::LLT<Matrix> llt(rotated);
  if (llt.info() != Eigen::Success) throw ContractViolation("gaussian_mf_step: covariance not positive definite");
  const Eigen::Index d = sigma.rows();
  Matrix prec = llt.solve(Matrix::Identity(d, d));
  prec = 0.5 * (prec + prec.transpose()).eval();
  const Matrix lower = llt.matrixL();
  const double logdet = 2.0 * lower.diagonal().array().log().sum();
  const Vector pdiag = prec.diagonal();
  // Mean-field optimum N(0, S) with S_ii = 1 / prec_ii; KL(N(0,S) || N(0, rotated)).
  GaussianMfStep out;
  out.kl = 0.5 * (logdet + pdiag.array().log().sum());
  const Vector root = pdiag.array().sqrt();
  out.next_sigma = root.asDiagonal() * rotated * root.asDiagonal();
  out.next_sigma = 0.5 * (out.next_sigma + out.next_sigma.transpose()).eval();
  return out;
}

double kl_gaussian_after_mf(const Matrix& sigma, const Rotation& r) {
  require(sigma.rows() == r.dim(), "kl_gaussian_after_mf: dimension mismatch");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw ContractViolation("kl_gaussian_after_mf: sigma not positive definite");
  const Matrix prec = llt.solve(Matrix::Identity(sigma.rows(), sigma.cols()));
  const double dev = (prec.diagonal().array() - 1.0).abs().maxCoeff();
  require(dev <= 1e-8, "kl_gaussian_after_mf: precision diagonal must be 1 (mean-field optimum must already be gamma)");
  return gaussian_mf_step(sigma, r.to_dense()).kl;
}

double median_pairwise_distance(const Matrix& pooled) {
  const Eigen::Index n = pooled.rows();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  if (dists.empty()) return kBandwidthFloor;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double med = *mid;
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), mid);
    med = 0.5 * (med + lower);
  }
  return std::max(med, kBandwidthFloor);
}

MmdResult mmd_unbiased(const Matrix& x, const Matrix& y) {
  require(x.rows() >= 2 && y.rows() >= 2, "mmd_unbiased: need at least two samples in each set");
  require_dim(y.cols(), x.cols(), "mmd_unbiased");
  Matrix pooled(x.rows() + y.rows(), x.cols());
  pooled << x, y;
  const double h = median_pairwise_distance(pooled);
  const double gamma = 1.0 / (2.0 * h * h);
  auto k = [&](const auto& a, const auto& b) { return std::exp(-gamma * (a - b).squaredNorm()); };

  const double n = static_cast<double>(x.rows());
  const double m = static_cast<double>(y.rows());
  double kxx = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) kxx += k(x.row(i), x.row(j));
  double kyy = 0.0;
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = i + 1; j < y.rows(); ++j) kyy += k(y.row(i), y.row(j));
  double kxy = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) kxy += k(x.row(i), y.row(j));
  const double mmd2 = 2.0 * kxx / (n * (n - 1.0)) + 2.0 * kyy / (m * (m - 1.0)) - 2.0 * kxy / (n * m);
  return {mmd2, h};
}

double stein_kernel_imq(const Vector& x, const Vector& y, const Vector& sx, const Vector& sy) {
  constexpr double c2 = 1.0;
  constexpr double beta = -0.5;
  const Vector r = x - y;
  const double r2 = r.squaredNorm();
  const double u = c2 + r2;
  const double d = static_cast<double>(x.size());
  const double k = std::pow(u, beta);
  const double u_b1 = std::pow(u, beta - 1.0);
  // grad_x k = 2 beta u^{beta-1} r, grad_y k = -grad_x k.
  const double term_ss = sx.dot(sy) * k;
  const double term_sx = -2.0 * beta * u_b1 * sx.dot(r);
  const double term_sy = 2.0 * beta * u_b1 * sy.dot(r);
  const double trace = -2.0 * beta * d * u_b1 - 4.0 * beta * (beta - 1.0) * std::pow(u, beta - 2.0) * r2;
  return term_ss + term_sx + term_sy + trace;
}

double ksd(const Matrix& x, const Matrix& scores) {
  require(x.rows() >= 2, "ksd: need at least two samples");
  require(scores.rows() == x.rows() && scores.cols() == x.cols(), "ksd: score shape mismatch");
  const Eigen::Index n = x.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector xi = x.row(i).transpose();
    const Vector si = scores.row(i).transpose();
    total += stein_kernel_imq(xi, xi, si, si);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      total += 2.0 * stein_kernel_imq(xi, x.row(j).transpose(), si, scores.row(j).transpose());
    }
  }
  const double v = total / (static_cast<double>(n) * static_cast<double>(n));
  return std::sqrt(std::max(v, 0.0));
}

double ksd(const Matrix& x, const TargetDistribution& target) {
  Matrix scores(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) scores.row(i) = target.score(x.row(i).transpose()).transpose();
  return ksd(x, scores);
}

double ess(const Vector& w) {
  require(w.size() >= 1, "ess: empty weights");
  const double s = w.sum();
  return s * s / w.squaredNorm();
}

long iterations_to_threshold_single(const Matrix& sigma0, const RotationStrategy& strategy, double threshold,
                                    RandomStream& rng, long cap) {
  const Eigen::Index d = sigma0.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma0);
  double kl = kl_gaussian_analytic(es.eigenvalues());
  Matrix sigma = sigma0;
  long count = 0;
  while (kl >= threshold) {
    if (count >= cap) return -1;
    Matrix rot;
    switch (strategy.kind) {
      case RotationStrategy::Kind::identity:
        rot = Matrix::Identity(d, d);
        break;
      case RotationStrategy::Kind::random:
        rot = sample_haar_matrix(d, rng);
        break;
      case RotationStrategy::Kind::pca: {
        const Matrix prec = sigma.llt().solve(Matrix::Identity(d, d));
        const Matrix h = gaussian_H(0.5 * (prec + prec.transpose()));
        rot = select_rotation(eig_sym(h), strategy.var_threshold).rotation.to_dense();
        break;
      }
    }
    GaussianMfStep step = gaussian_mf_step(sigma, rot);
    sigma = std::move(step.next_sigma);
    kl = std::max(step.kl, 0.0);
    ++count;
  }
  return count;
}

SweepCell iterations_to_threshold(Eigen::Index d, double kappa, const RotationStrategy& strategy, double threshold,
                                  long replicates, std::uint64_t seed, int threads) {
  require(replicates >= 1, "iterations_to_threshold: replicates must be positive");
  require(threshold > 0, "iterations_to_threshold: threshold must be positive");
  strategy.validate();
  std::vector<long> counts(static_cast<std::size_t>(replicates), 0);
  const RandomStream root(seed);
  auto work = [&](long r) {
    RandomStream rng = root.split(static_cast<std::uint64_t>(r));
    RandomStream cov_rng = rng.split(0);
    RandomStream rot_rng = rng.split(1);
    const GaussianTarget t = make_conditioned_gaussian(d, kappa, cov_rng);
    counts[static_cast<std::size_t>(r)] = iterations_to_threshold_single(t.covariance(), strategy, threshold, rot_rng);
  };
  parallel_for(replicates, threads, work);

  SweepCell cell;
  cell.replicates = replicates;
  cell.counts = counts;
  double sum = 0.0;
  for (long c : counts) {
    if (c < 0) {
      ++cell.censored;
      sum += static_cast<double>(kIterationCap);
    } else {
      sum += static_cast<double>(c);
    }
  }
  cell.mean_iters = sum / static_cast<double>(replicates);
  double ss = 0.0;
  for (long c : counts) {
    const double v = c < 0 ? static_cast<double>(kIterationCap) : static_cast<double>(c);
    ss += (v - cell.mean_iters) * (v - cell.mean_iters);
  }
  cell.sd_iters = replicates > 1 ? std::sqrt(ss / static_cast<double>(replicates - 1)) : 0.0;
  return cell;
}

Matrix rwm_reference_samples(const TargetDistribution& target, long n, const Matrix& precond_chol, RandomStream& rng,
                             const RwmOptions& opts) {
  const Eigen::Index d = target.dim();
  require(n >= 1 && opts.chains >= 1 && opts.thin >= 1, "rwm_reference_samples: invalid options");
  require(precond_chol.rows() == d && precond_chol.cols() == d, "rwm_reference_samples: preconditioner shape");
  const double step = opts.step_scale > 0 ? opts.step_scale : 2.38 / std::sqrt(static_cast<double>(d));
  Matrix out(n, d);
  long row = 0;
  for (int c = 0; c < opts.chains; ++c) {
    RandomStream cr = rng.split(static_cast<std::uint64_t>(c));
    const long per_chain = n / opts.chains + (c < n % opts.chains ? 1 : 0);
    Vector x = Vector::Zero(d);
    double lp = target.log_density(x);
    const long total = opts.burn_in + per_chain * opts.thin;
    for (long it = 0; it < total; ++it) {
      const Vector prop = x + step * (precond_chol * cr.normal_vector(d));
      const double lp_prop = target.log_density(prop);
      if (std::log(cr.uniform()) < lp_prop - lp) {
        x = prop;
        lp = lp_prop;
      }
      if (it >= opts.burn_in && (it - opts.burn_in + 1) % opts.thin == 0) out.row(row++) = x.transpose();
    }
  }
  return out;
}

MetricsRecord evaluate_chain(const TransportChain& chain, const TargetDistribution& target, const Matrix& reference,
                             RandomStream& rng, const EvaluationOptions& opts) {
  MetricsRecord rec;
  rec.k = static_cast<long>(chain.size());
  QSamples q = sample_q(chain, opts.eval_samples, rng);
  const Eigen::Index n = q.x.rows();
  Matrix scores(n, q.x.cols());
  Vector log_ratio(n);
  Vector s;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lp = target.log_density_and_score(q.x.row(i).transpose(), s);
    scores.row(i) = s.transpose();
    log_ratio(i) = lp - q.log_q(i);
  }
  rec.elbo = log_ratio.mean();
  rec.ess = ess(importance_weights_from_log_ratios(log_ratio));
  rec.ksd = ksd(q.x, scores);
  if (reference.rows() >= 2) {
    const MmdResult m = mmd_unbiased(q.x, reference);
    rec.mmd = m.mmd2;
    rec.mmd_bandwidth = m.bandwidth;
  } else {
    rec.mmd = std::nan("");
  }
  return rec;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string metrics_csv_header() { return "run_id,k,elbo,mmd,ksd,ess,kl_analytic,seed"; }

std::string metrics_csv_row(const MetricsRecord& r) {
  std::string row = r.run_id + "," + std::to_string(r.k) + ",";
  if (r.failed) return row + "nan,nan,nan,nan,failed," + std::to_string(r.seed);
  row += format_double(r.elbo) + "," + format_double(r.mmd) + "," + format_double(r.ksd) + "," + format_double(r.ess) +
         ",";
  if (r.kl_analytic) row += format_double(*r.kl_analytic);
  return row + "," + std::to_string(r.seed);
}

std::optional<double> affine_gaussian_kl(const TransportChain& chain, const GaussianTarget& g) {
  for (const auto& layer : chain.layers())
    if (!layer.map.is_affine()) return std::nullopt;
  const Eigen::Index d = chain.dim();
  const Vector c = chain.push_forward(Vector::Zero(d)).first;
  Matrix a(d, d);
  for (Eigen::Index j = 0; j < d; ++j) a.col(j) = chain.push_forward(Vector::Unit(d, j)).first - c;
  const Matrix& p = g.precision();
  const Vector diff = g.mean() - c;
  const double logdet_s = 2.0 * g.chol().diagonal().array().log().sum();
  const double logdet_q = 2.0 * std::log(std::abs(a.fullPivLu().determinant()));
  const double kl = 0.5 * ((p * a * a.transpose()).trace() + diff.dot(p * diff) - static_cast<double>(d) + logdet_s -
                           logdet_q);
  return std::max(kl, 0.0);
}

}  // namespace igauss
