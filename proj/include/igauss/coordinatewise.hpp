#pragma once

#include <string>
#include <utility>
#include <variant>

#include "igauss/types.hpp"

namespace igauss {

/// Per-coordinate evaluation of a coordinatewise map F at x.
struct CoordEval {
  Vector y;               // F_i(x_i)
  Vector log_deriv;       // log F_i'(x_i)
  Vector dlog_deriv_dx;   // F_i''(x_i) / F_i'(x_i)
  double logdet() const { return log_deriv.sum(); }
};

/// Derivatives of F_i(x_i) and log F_i'(x_i) with respect to the raw
/// parameters of coordinate i. Row i holds the block for coordinate i.
struct ParamGrads {
  Matrix dF;
  Matrix dlog_deriv;
};

/// F(x) = shift + exp(log_scale) * x.
class AffineMap {
 public:
  explicit AffineMap(Eigen::Index d = 0) : shift_(Vector::Zero(d)), log_scale_(Vector::Zero(d)) {}
  AffineMap(Vector shift, Vector log_scale);

  Eigen::Index dim() const { return shift_.size(); }
  static constexpr Eigen::Index params_per_coordinate() { return 2; }

  const Vector& shift() const { return shift_; }
  const Vector& log_scale() const { return log_scale_; }
  Vector scale() const { return log_scale_.array().exp(); }

  CoordEval evaluate(const Vector& x) const;
  std::pair<Vector, double> inverse(const Vector& y) const;

  /// Layout: per coordinate [shift_i, log_scale_i].
  Vector params() const;
  void set_params(const Vector& flat);

  ParamGrads param_grads(const Vector& x) const;
  /// grad += sum_n sum_i wF(n,i) dF_i/dtheta + wlog(n,i) dlogF_i'/dtheta over the batch rows.
  void accumulate_vjp(const Matrix& x, const Matrix& wF, const Matrix& wlog, Vector& grad) const;

 private:
  Vector shift_;
  Vector log_scale_;
};

/// Monotone rational-quadratic spline per coordinate on [-bound, bound] with
/// identity tails. Bins are parameterized by softmax widths/heights (minimum
/// bin fraction kMinBinFraction) and softplus interior knot derivatives; the
/// boundary derivatives are fixed to 1 so F is C^1 across +-bound.
class RQSplineMap {
 public:
  static constexpr double kMinBinFraction = 1e-3;

  RQSplineMap() = default;
  /// Identity-initialized spline.
  RQSplineMap(Eigen::Index d, int knots, double bound);
  RQSplineMap(int knots, double bound, Matrix raw_widths, Matrix raw_heights, Matrix raw_derivs);

  Eigen::Index dim() const { return raw_widths_.rows(); }
  int knots() const { return knots_; }
  double bound() const { return bound_; }
  Eigen::Index params_per_coordinate() const { return 3 * knots_ - 1; }

  const Matrix& raw_widths() const { return raw_widths_; }
  const Matrix& raw_heights() const { return raw_heights_; }
  const Matrix& raw_derivs() const { return raw_derivs_; }

  /// Knot locations (d x (K+1)) and knot derivatives after constraining.
  const Matrix& knot_x() const { return knot_x_; }
  const Matrix& knot_y() const { return knot_y_; }
  const Matrix& knot_deriv() const { return knot_d_; }

  CoordEval evaluate(const Vector& x) const;
  std::pair<Vector, double> inverse(const Vector& y) const;

  double forward_scalar(Eigen::Index i, double x, double* log_deriv = nullptr) const;
  double inverse_scalar(Eigen::Index i, double y) const;

  /// Layout per coordinate: [raw_widths(K), raw_heights(K), raw_derivs(K-1)].
  Vector params() const;
  void set_params(const Vector& flat);

  ParamGrads param_grads(const Vector& x) const;
  void accumulate_vjp(const Matrix& x, const Matrix& wF, const Matrix& wlog, Vector& grad) const;

  /// Raw value whose softplus is 1 (identity-initialized interior derivative).
  static double identity_raw_deriv();

 private:
  void rebuild();
  Eigen::Index find_bin(const Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>& knots, double v) const;

  int knots_ = 0;
  double bound_ = 0.0;
  Matrix raw_widths_;
  Matrix raw_heights_;
  Matrix raw_derivs_;
  Matrix knot_x_;
  Matrix knot_y_;
  Matrix knot_d_;
  Matrix softmax_w_;
  Matrix softmax_h_;
};

struct MapFamily {
  enum class Kind { affine, spline };
  Kind kind = Kind::spline;
  int knots = 10;
  double bound = 8.0;

  static MapFamily affine() { return {Kind::affine, 10, 8.0}; }
  static MapFamily spline(int knots = 10, double bound = 8.0) { return {Kind::spline, knots, bound}; }
  std::string to_string() const;
};

/// Value-semantic coordinatewise diffeomorphism: affine or spline.
class CoordinatewiseMap {
 public:
  CoordinatewiseMap() = default;
  CoordinatewiseMap(AffineMap m) : impl_(std::move(m)) {}
  CoordinatewiseMap(RQSplineMap m) : impl_(std::move(m)) {}

  /// Identity map of the given family.
  static CoordinatewiseMap identity(Eigen::Index d, const MapFamily& family);

  bool is_affine() const { return std::holds_alternative<AffineMap>(impl_); }
  bool is_spline() const { return std::holds_alternative<RQSplineMap>(impl_); }
  const AffineMap& affine() const { return std::get<AffineMap>(impl_); }
  const RQSplineMap& spline() const { return std::get<RQSplineMap>(impl_); }

  Eigen::Index dim() const;
  Eigen::Index param_count() const;
  Vector params() const;
  void set_params(const Vector& flat);

  CoordEval evaluate(const Vector& x) const;
  std::pair<Vector, double> forward(const Vector& x) const;
  std::pair<Vector, double> inverse(const Vector& y) const;
  ParamGrads param_grads(const Vector& x) const;
  void accumulate_vjp(const Matrix& x, const Matrix& wF, const Matrix& wlog, Vector& grad) const;

 private:
  std::variant<AffineMap, RQSplineMap> impl_;
};

std::pair<Vector, double> coordwise_forward(const CoordinatewiseMap& m, const Vector& x);
std::pair<Vector, double> coordwise_inverse(const CoordinatewiseMap& m, const Vector& y);
Vector coordwise_dlogdet_dx(const CoordinatewiseMap& m, const Vector& x);
ParamGrads coordwise_param_grads(const CoordinatewiseMap& m, const Vector& x);

}  // namespace igauss
