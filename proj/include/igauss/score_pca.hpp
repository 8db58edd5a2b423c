#pragma once

#include "igauss/random.hpp"
#include "igauss/rotation.hpp"
#include "igauss/target.hpp"

namespace igauss {

/// Symmetrized Monte Carlo estimate of H = E_gamma[x h(x)^T], where
/// h(x) = grad log p(x) + x is the relative score against the standard Gaussian.
struct HMatrix {
  Matrix matrix;
  /// Per-entry standard errors of the symmetrized estimator.
  Matrix std_error;
  long sample_size = 0;
};

struct EigenDecomposition {
  Vector values;   // descending |value|
  Matrix vectors;  // columns, orthonormal
};

/// Samples are drawn in chunks, each from its own sub-stream split from `rng`;
/// partial sums are reduced in chunk order so the result depends only on the
/// seed and `chunk_size`.
HMatrix estimate_H(const TargetDistribution& p, long n_samples, RandomStream& rng, long chunk_size = 4096);

/// Exact H for a centered Gaussian target: I - Sigma^{-1}.
Matrix gaussian_H(const Matrix& precision);

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenpairs are ordered by descending |value|; equal magnitudes put the
/// larger signed value first, then keep diagonal order. Each eigenvector is
/// signed so its largest-magnitude entry is positive (first such entry on ties).
EigenDecomposition eig_sym(const Matrix& h, int max_sweeps = 100);
inline EigenDecomposition eig_sym(const HMatrix& h) { return eig_sym(h.matrix); }

struct RotationChoice {
  Rotation rotation;
  Eigen::Index rank = 0;
};

/// Smallest r with sum_{i<=r} v_i^2 / sum v_i^2 >= threshold; R^T holds those
/// eigenvectors as leading columns, completed by Gram-Schmidt over the
/// standard basis. Returns a dense rotation.
RotationChoice select_rotation(const EigenDecomposition& e, double var_threshold);

/// Same selection, stored as r Householder reflections when r <= d/2.
RotationChoice select_rotation_compact(const EigenDecomposition& e, double var_threshold);

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// R-diagonal sign correction).
Rotation sample_haar_rotation(Eigen::Index d, RandomStream& rng);
Matrix sample_haar_matrix(Eigen::Index d, RandomStream& rng);

/// sum_i (R H R^T)_ii^2, the lower bound on the projected Fisher information.
double pfi_lower_bound(const Matrix& h, const Rotation& r);
inline double pfi_lower_bound(const HMatrix& h, const Rotation& r) { return pfi_lower_bound(h.matrix, r); }

/// Closed-form projected Fisher information sum_i (Sigma^{-1}_ii - 1)^2 for a centered Gaussian.
double gaussian_projected_fi(const GaussianTarget& t);

/// (2 sum v^2 + (sum v)^2) / (d + 2): the Haar average of pfi_lower_bound.
double random_rotation_bound(const Vector& values);

/// |theta^T H theta| for a unit vector theta.
double stein_linear(const Matrix& h, const Vector& theta);
inline double stein_linear(const HMatrix& h, const Vector& theta) { return stein_linear(h.matrix, theta); }

}  // namespace igauss
