#pragma once

#include <vector>

#include "igauss/types.hpp"

namespace igauss {

/// Orthogonal matrix, stored densely or as a product of Householder reflections.
///
/// Householder form: R = H_r ... H_2 H_1 with H_j = I - 2 w_j w_j^T, so R x
/// applies H_1 first and R^T x applies the reflections in reverse order. Only
/// O(r d) storage and work; directions outside span{w_j} are left unchanged.
class Rotation {
 public:
  enum class Kind { dense, householder };

  Rotation() = default;

  static Rotation identity(Eigen::Index d);
  static Rotation dense(Matrix r);
  /// Columns of `reflectors` are the unit vectors w_1..w_r.
  static Rotation householder(Eigen::Index d, Matrix reflectors);

  /// Householder product R whose transpose has the given orthonormal columns
  /// as its leading columns, up to the sign of each column. The sign of each
  /// reflector is chosen for numerical stability.
  static Rotation householder_from_columns(const Matrix& orthonormal_columns);

  Kind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  /// Number of reflectors (householder) or d (dense).
  Eigen::Index rank() const { return kind_ == Kind::dense ? dim_ : reflectors_.cols(); }

  const Matrix& dense_matrix() const { return dense_; }
  const Matrix& reflectors() const { return reflectors_; }

  Vector apply(const Vector& x, bool transpose = false) const;
  /// Rows of `x` are points; returns rows of R x (or R^T x).
  Matrix apply_rows(const Matrix& x, bool transpose = false) const;
  Matrix to_dense() const;

 private:
  Kind kind_ = Kind::dense;
  Eigen::Index dim_ = 0;
  Matrix dense_;
  Matrix reflectors_;
};

Vector rotation_apply(const Rotation& r, const Vector& x, bool transpose = false);

}  // namespace igauss
