#include "igauss/score_pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace igauss {

HMatrix estimate_H(const TargetDistribution& p, long n_samples, RandomStream& rng, long chunk_size) {
  require(n_samples >= 2, "estimate_H: need at least two samples");
  require(chunk_size >= 1, "estimate_H: chunk_size must be positive");
  const Eigen::Index d = p.dim();
  Matrix sum = Matrix::Zero(d, d);
  Matrix sum_sq = Matrix::Zero(d, d);
  const long n_chunks = (n_samples + chunk_size - 1) / chunk_size;
  // One draw from the caller's stream seeds this call's chunk streams.
  const RandomStream base(rng.engine()());
  Vector score;
  for (long c = 0; c < n_chunks; ++c) {
    RandomStream sub = base.split(static_cast<std::uint64_t>(c));
    const long count = std::min(chunk_size, n_samples - c * chunk_size);
    for (long n = 0; n < count; ++n) {
      const Vector x = sub.normal_vector(d);
      p.log_density_and_score(x, score);
      const Vector h = score + x;
      const Matrix outer = x * h.transpose();
      const Matrix sym = 0.5 * (outer + outer.transpose());
      sum += sym;
      sum_sq += sym.cwiseAbs2();
    }
  }
  const double nd = static_cast<double>(n_samples);
  HMatrix out;
  out.sample_size = n_samples;
  out.matrix = sum / nd;
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  const Matrix var = ((sum_sq / nd) - out.matrix.cwiseAbs2()) * (nd / (nd - 1.0));
  out.std_error = (var.cwiseMax(0.0) / nd).cwiseSqrt();
  return out;
}

Matrix gaussian_H(const Matrix& precision) {
  return Matrix::Identity(precision.rows(), precision.cols()) - precision;
}

EigenDecomposition eig_sym(const Matrix& h_in, int max_sweeps) {
  require(h_in.rows() == h_in.cols(), "eig_sym: matrix must be square");
  const Eigen::Index d = h_in.rows();
  const double asym = (h_in - h_in.transpose()).lpNorm<Eigen::Infinity>();
  const double scale = h_in.norm();
  require(asym <= 1e-10 * std::max(1.0, scale), "eig_sym: matrix is not symmetric");

  Matrix a = 0.5 * (h_in + h_in.transpose());
  Matrix v = Matrix::Identity(d, d);
  const double tol = 1e-12 * scale;

  auto off_norm = [&]() {
    double s = 0.0;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = i + 1; j < d; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  bool converged = scale == 0.0 || off_norm() <= tol;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (Eigen::Index p = 0; p < d - 1; ++p) {
      for (Eigen::Index q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation annihilating a(p, q); t is the smaller root of t^2 + 2 theta t - 1 = 0.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = off_norm() <= tol;
  }
  if (!converged) throw NumericalError("eig_sym: Jacobi iteration did not converge");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  const double tie_tol = 1e-12 * std::max(scale, 1e-300);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    const double ai = std::abs(a(i, i));
    const double aj = std::abs(a(j, j));
    if (std::abs(ai - aj) > tie_tol) return ai > aj;
    return a(i, i) > a(j, j) + tie_tol;
  });

  EigenDecomposition out{Vector(d), Matrix(d, d)};
  for (Eigen::Index c = 0; c < d; ++c) {
    const Eigen::Index src = order[static_cast<std::size_t>(c)];
    out.values(c) = a(src, src);
    Vector col = v.col(src);
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      if (std::abs(col(k)) > best + 1e-12) {
        best = std::abs(col(k));
        arg = k;
      }
    }
    if (col(arg) < 0) col = -col;
    out.vectors.col(c) = col;
  }
  return out;
}

namespace {

Eigen::Index select_rank(const Vector& values, double threshold) {
  require(threshold > 0.0 && threshold <= 1.0, "select_rotation: threshold must lie in (0, 1]");
  const double total = values.squaredNorm();
  if (total == 0.0) return 0;
  double cum = 0.0;
  for (Eigen::Index r = 0; r < values.size(); ++r) {
    cum += values(r) * values(r);
    if (cum / total >= threshold - 1e-12) return r + 1;
  }
  return values.size();
}

// Orthonormal basis whose leading columns are `lead`, completed from e_1..e_d.
Matrix complete_basis(const Matrix& lead) {
  const Eigen::Index d = lead.rows();
  Matrix basis(d, d);
  Eigen::Index filled = lead.cols();
  basis.leftCols(filled) = lead;
  for (Eigen::Index k = 0; k < d && filled < d; ++k) {
    Vector cand = Vector::Unit(d, k);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index j = 0; j < filled; ++j) cand -= basis.col(j).dot(cand) * basis.col(j);
    }
    const double nrm = cand.norm();
    if (nrm < 1e-8) continue;
    basis.col(filled++) = cand / nrm;
  }
  if (filled < d) throw NumericalError("select_rotation: basis completion failed");
  return basis;
}

}  // namespace

RotationChoice select_rotation(const EigenDecomposition& e, double var_threshold) {
  const Eigen::Index d = e.values.size();
  const Eigen::Index r = select_rank(e.values, var_threshold);
  if (r == 0) return {Rotation::dense(Matrix::Identity(d, d)), 0};
  const Matrix rt = complete_basis(e.vectors.leftCols(r));
  return {Rotation::dense(rt.transpose()), r};
}

RotationChoice select_rotation_compact(const EigenDecomposition& e, double var_threshold) {
  const Eigen::Index d = e.values.size();
  const Eigen::Index r = select_rank(e.values, var_threshold);
  if (r == 0) return {Rotation::identity(d), 0};
  if (2 * r > d) return select_rotation(e, var_threshold);
  return {Rotation::householder_from_columns(e.vectors.leftCols(r)), r};
}

Matrix sample_haar_matrix(Eigen::Index d, RandomStream& rng) {
  require(d >= 1, "sample_haar_rotation: d must be >= 1");
  const Matrix g = rng.normal_matrix(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix& packed = qr.matrixQR();
  for (Eigen::Index j = 0; j < d; ++j)
    if (packed(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

Rotation sample_haar_rotation(Eigen::Index d, RandomStream& rng) { return Rotation::dense(sample_haar_matrix(d, rng)); }

double pfi_lower_bound(const Matrix& h, const Rotation& r) {
  require(h.rows() == r.dim() && h.cols() == r.dim(), "pfi_lower_bound: dimension mismatch");
  const Matrix rd = r.to_dense();
  const Matrix m = rd * h * rd.transpose();
  return m.diagonal().squaredNorm();
}

double gaussian_projected_fi(const GaussianTarget& t) {
  require(t.mean().lpNorm<Eigen::Infinity>() == 0.0, "gaussian_projected_fi: target must be centered");
  return (t.precision().diagonal().array() - 1.0).square().sum();
}

double random_rotation_bound(const Vector& values) {
  const double d = static_cast<double>(values.size());
  const double s = values.sum();
  return (2.0 * values.squaredNorm() + s * s) / (d + 2.0);
}

double stein_linear(const Matrix& h, const Vector& theta) {
  require_dim(theta.size(), h.rows(), "stein_linear");
  require(std::abs(theta.norm() - 1.0) <= 1e-10, "stein_linear: theta must be a unit vector");
  return std::abs(theta.dot(h * theta));
}

}  // namespace igauss
