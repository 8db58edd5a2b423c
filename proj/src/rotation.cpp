#include "igauss/rotation.hpp"

#include <cmath>

namespace igauss {

Rotation Rotation::identity(Eigen::Index d) { return householder(d, Matrix(d, 0)); }

Rotation Rotation::dense(Matrix r) {
  require(r.rows() == r.cols(), "Rotation::dense: matrix must be square");
  const Eigen::Index d = r.rows();
  const double err = (r * r.transpose() - Matrix::Identity(d, d)).lpNorm<Eigen::Infinity>();
  require(err <= 1e-10, "Rotation::dense: matrix is not orthogonal");
  Rotation out;
  out.kind_ = Kind::dense;
  out.dim_ = d;
  out.dense_ = std::move(r);
  return out;
}

Rotation Rotation::householder(Eigen::Index d, Matrix reflectors) {
  require(reflectors.rows() == d, "Rotation::householder: reflector length must equal d");
  for (Eigen::Index j = 0; j < reflectors.cols(); ++j) {
    require(std::abs(reflectors.col(j).norm() - 1.0) <= 1e-12, "Rotation::householder: reflectors must be unit vectors");
  }
  Rotation out;
  out.kind_ = Kind::householder;
  out.dim_ = d;
  out.reflectors_ = std::move(reflectors);
  return out;
}

Rotation Rotation::householder_from_columns(const Matrix& columns) {
  const Eigen::Index d = columns.rows();
  const Eigen::Index r = columns.cols();
  require(r <= d, "householder_from_columns: more columns than rows");
  // Reduce the columns to upper-triangular form, Q^T V = [D; 0]. Each step
  // zeroes column j below the diagonal; Q = H_1 ... H_r so the leading
  // columns of Q are +-V. With R = Q^T = H_r ... H_1 the conventions match.
  Matrix work = columns;
  Matrix w_all(d, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Vector v = Vector::Zero(d);
    v.tail(d - j) = work.col(j).tail(d - j);
    const double alpha = v.norm();
    require(alpha > 1e-12, "householder_from_columns: columns are linearly dependent");
    // v + sign(v_j) * alpha * e_j avoids cancellation.
    const double sgn = v(j) >= 0 ? 1.0 : -1.0;
    v(j) += sgn * alpha;
    v.normalize();
    w_all.col(j) = v;
    work -= 2.0 * v * (v.transpose() * work);
  }
  return householder(d, std::move(w_all));
}

Vector Rotation::apply(const Vector& x, bool transpose) const {
  require_dim(x.size(), dim_, "rotation_apply");
  if (kind_ == Kind::dense) return transpose ? Vector(dense_.transpose() * x) : Vector(dense_ * x);
  Vector y = x;
  const Eigen::Index r = reflectors_.cols();
  for (Eigen::Index t = 0; t < r; ++t) {
    const Eigen::Index j = transpose ? r - 1 - t : t;
    const auto w = reflectors_.col(j);
    y -= (2.0 * w.dot(y)) * w;
  }
  return y;
}

Matrix Rotation::apply_rows(const Matrix& x, bool transpose) const {
  require_dim(x.cols(), dim_, "rotation_apply");
  if (kind_ == Kind::dense) return transpose ? Matrix(x * dense_) : Matrix(x * dense_.transpose());
  Matrix y = x;
  const Eigen::Index r = reflectors_.cols();
  for (Eigen::Index t = 0; t < r; ++t) {
    const Eigen::Index j = transpose ? r - 1 - t : t;
    const auto w = reflectors_.col(j);
    y -= 2.0 * (y * w) * w.transpose();
  }
  return y;
}

Matrix Rotation::to_dense() const {
  if (kind_ == Kind::dense) return dense_;
  // Column j of R is R e_j.
  Matrix out(dim_, dim_);
  for (Eigen::Index j = 0; j < dim_; ++j) out.col(j) = apply(Vector::Unit(dim_, j));
  return out;
}

Vector rotation_apply(const Rotation& r, const Vector& x, bool transpose) { return r.apply(x, transpose); }

}  // namespace igauss
