#include "igauss/coordinatewise.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace igauss {

namespace {

// Forward-mode dual number with N tangent directions.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  static Dual seed(double value, int slot) {
    Dual out(value);
    out.d[slot] = 1.0;
    return out;
  }
};

template <int N>
Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v + b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <int N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v - b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <int N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <int N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v / b.v);
  const double inv = 1.0 / b.v;
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}
template <int N>
Dual<N> log(const Dual<N>& a) {
  Dual<N> r(std::log(a.v));
  const double inv = 1.0 / a.v;
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * inv;
  return r;
}

using std::log;

// Rational-quadratic segment on one bin: knot (xk, yk), width wk, height hk,
// derivatives dk and dk1 at the left and right knots.
template <class T>
void rq_segment(const T& x, const T& xk, const T& wk, const T& yk, const T& hk, const T& dk, const T& dk1, T& f,
                T& log_fp) {
  const T s = hk / wk;
  const T xi = (x - xk) / wk;
  const T om = T(1.0) - xi;
  const T xo = xi * om;
  const T den = s + (dk1 + dk - T(2.0) * s) * xo;
  f = yk + hk * (s * xi * xi + dk * xo) / den;
  const T num = dk1 * xi * xi + T(2.0) * s * xo + dk * om * om;
  log_fp = T(2.0) * log(s) + log(num) - T(2.0) * log(den);
}

// Tangent slots for the local segment quantities.
enum Slot { kX = 0, kXk, kWk, kYk, kHk, kDk, kDk1, kSlots };
using SegDual = Dual<kSlots>;

struct SegmentDerivs {
  double f = 0.0;
  double log_fp = 0.0;
  SegDual f_dual;
  SegDual log_fp_dual;
};

SegmentDerivs eval_segment_dual(double x, double xk, double wk, double yk, double hk, double dk, double dk1) {
  SegmentDerivs out;
  rq_segment(SegDual::seed(x, kX), SegDual::seed(xk, kXk), SegDual::seed(wk, kWk), SegDual::seed(yk, kYk),
             SegDual::seed(hk, kHk), SegDual::seed(dk, kDk), SegDual::seed(dk1, kDk1), out.f_dual, out.log_fp_dual);
  out.f = out.f_dual.v;
  out.log_fp = out.log_fp_dual.v;
  return out;
}

double softplus(double r) { return r > 30.0 ? r : std::log1p(std::exp(r)); }
double logistic(double r) { return r >= 0 ? 1.0 / (1.0 + std::exp(-r)) : std::exp(r) / (1.0 + std::exp(r)); }

void check_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw ContractViolation(std::string(what) + ": non-finite input");
}

}  // namespace

// ---------------------------------------------------------------------------
// AffineMap

AffineMap::AffineMap(Vector shift, Vector log_scale) : shift_(std::move(shift)), log_scale_(std::move(log_scale)) {
  require_dim(log_scale_.size(), shift_.size(), "AffineMap");
  require(shift_.allFinite() && log_scale_.allFinite(), "AffineMap: non-finite parameters");
}

CoordEval AffineMap::evaluate(const Vector& x) const {
  require_dim(x.size(), dim(), "coordwise_forward");
  check_finite(x, "coordwise_forward");
  CoordEval e;
  e.y = shift_ + scale().cwiseProduct(x);
  e.log_deriv = log_scale_;
  e.dlog_deriv_dx = Vector::Zero(dim());
  return e;
}

std::pair<Vector, double> AffineMap::inverse(const Vector& y) const {
  require_dim(y.size(), dim(), "coordwise_inverse");
  check_finite(y, "coordwise_inverse");
  const Vector x = (y - shift_).cwiseProduct((-log_scale_).array().exp().matrix());
  return {x, -log_scale_.sum()};
}

Vector AffineMap::params() const {
  Vector p(2 * dim());
  for (Eigen::Index i = 0; i < dim(); ++i) {
    p(2 * i) = shift_(i);
    p(2 * i + 1) = log_scale_(i);
  }
  return p;
}

void AffineMap::set_params(const Vector& flat) {
  require_dim(flat.size(), 2 * dim(), "AffineMap::set_params");
  for (Eigen::Index i = 0; i < dim(); ++i) {
    shift_(i) = flat(2 * i);
    log_scale_(i) = flat(2 * i + 1);
  }
}

ParamGrads AffineMap::param_grads(const Vector& x) const {
  require_dim(x.size(), dim(), "coordwise_param_grads");
  ParamGrads g{Matrix::Zero(dim(), 2), Matrix::Zero(dim(), 2)};
  for (Eigen::Index i = 0; i < dim(); ++i) {
    g.dF(i, 0) = 1.0;
    g.dF(i, 1) = std::exp(log_scale_(i)) * x(i);
    g.dlog_deriv(i, 1) = 1.0;
  }
  return g;
}

void AffineMap::accumulate_vjp(const Matrix& x, const Matrix& wF, const Matrix& wlog, Vector& grad) const {
  require_dim(grad.size(), 2 * dim(), "AffineMap::accumulate_vjp");
  const Vector s = scale();
  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (Eigen::Index i = 0; i < dim(); ++i) {
      grad(2 * i) += wF(n, i);
      grad(2 * i + 1) += wF(n, i) * s(i) * x(n, i) + wlog(n, i);
    }
  }
}

// ---------------------------------------------------------------------------
// RQSplineMap

double RQSplineMap::identity_raw_deriv() { return std::log(std::exp(1.0) - 1.0); }

RQSplineMap::RQSplineMap(Eigen::Index d, int knots, double bound)
    : RQSplineMap(knots, bound, Matrix::Zero(d, knots), Matrix::Zero(d, knots),
                  Matrix::Constant(d, std::max(knots - 1, 0), identity_raw_deriv())) {}

RQSplineMap::RQSplineMap(int knots, double bound, Matrix raw_widths, Matrix raw_heights, Matrix raw_derivs)
    : knots_(knots),
      bound_(bound),
      raw_widths_(std::move(raw_widths)),
      raw_heights_(std::move(raw_heights)),
      raw_derivs_(std::move(raw_derivs)) {
  require(knots_ >= 1, "RQSplineMap: need at least one bin");
  require(bound_ > 0, "RQSplineMap: bound must be positive");
  require(knots_ * kMinBinFraction < 1.0, "RQSplineMap: too many bins for the minimum bin fraction");
  require(raw_widths_.cols() == knots_ && raw_heights_.cols() == knots_ && raw_derivs_.cols() == knots_ - 1,
          "RQSplineMap: raw parameter shapes");
  require(raw_heights_.rows() == raw_widths_.rows() && raw_derivs_.rows() == raw_widths_.rows(),
          "RQSplineMap: raw parameter rows");
  rebuild();
}

void RQSplineMap::rebuild() {
  require(raw_widths_.allFinite() && raw_heights_.allFinite() && raw_derivs_.allFinite(),
          "RQSplineMap: non-finite parameters");
  const Eigen::Index d = dim();
  const int K = knots_;
  const double span = 2.0 * bound_;
  const double free_mass = 1.0 - K * kMinBinFraction;
  knot_x_.resize(d, K + 1);
  knot_y_.resize(d, K + 1);
  knot_d_.resize(d, K + 1);
  softmax_w_.resize(d, K);
  softmax_h_.resize(d, K);

  auto softmax_row = [](const Eigen::RowVectorXd& raw) -> Eigen::RowVectorXd {
    const Eigen::RowVectorXd e = (raw.array() - raw.maxCoeff()).exp().matrix();
    return e / e.sum();
  };

  for (Eigen::Index i = 0; i < d; ++i) {
    softmax_w_.row(i) = softmax_row(raw_widths_.row(i));
    softmax_h_.row(i) = softmax_row(raw_heights_.row(i));
    knot_x_(i, 0) = -bound_;
    knot_y_(i, 0) = -bound_;
    for (int k = 0; k < K; ++k) {
      knot_x_(i, k + 1) = knot_x_(i, k) + span * (kMinBinFraction + free_mass * softmax_w_(i, k));
      knot_y_(i, k + 1) = knot_y_(i, k) + span * (kMinBinFraction + free_mass * softmax_h_(i, k));
    }
    knot_x_(i, K) = bound_;
    knot_y_(i, K) = bound_;
    knot_d_(i, 0) = 1.0;
    knot_d_(i, K) = 1.0;
    for (int k = 1; k < K; ++k) knot_d_(i, k) = softplus(raw_derivs_(i, k - 1));
  }
}

Eigen::Index RQSplineMap::find_bin(const Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>& knots, double v) const {
  // knots has K+1 increasing entries; returns k with knots[k] <= v < knots[k+1].
  Eigen::Index lo = 0;
  Eigen::Index hi = knots_;
  while (hi - lo > 1) {
    const Eigen::Index mid = (lo + hi) / 2;
    if (knots(mid) <= v) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double RQSplineMap::forward_scalar(Eigen::Index i, double x, double* log_deriv) const {
  if (x <= -bound_ || x >= bound_) {
    if (log_deriv) *log_deriv = 0.0;
    return x;
  }
  const Eigen::Index k = find_bin(knot_x_.row(i), x);
  const double xk = knot_x_(i, k);
  const double wk = knot_x_(i, k + 1) - xk;
  const double yk = knot_y_(i, k);
  const double hk = knot_y_(i, k + 1) - yk;
  double f = 0.0;
  double lf = 0.0;
  rq_segment<double>(x, xk, wk, yk, hk, knot_d_(i, k), knot_d_(i, k + 1), f, lf);
  if (log_deriv) *log_deriv = lf;
  return f;
}

CoordEval RQSplineMap::evaluate(const Vector& x) const {
  require_dim(x.size(), dim(), "coordwise_forward");
  check_finite(x, "coordwise_forward");
  CoordEval e;
  e.y.resize(dim());
  e.log_deriv.resize(dim());
  e.dlog_deriv_dx.resize(dim());
  for (Eigen::Index i = 0; i < dim(); ++i) {
    const double xi = x(i);
    if (xi <= -bound_ || xi >= bound_) {
      e.y(i) = xi;
      e.log_deriv(i) = 0.0;
      e.dlog_deriv_dx(i) = 0.0;
      continue;
    }
    const Eigen::Index k = find_bin(knot_x_.row(i), xi);
    const double xk = knot_x_(i, k);
    const double yk = knot_y_(i, k);
    const auto seg = eval_segment_dual(xi, xk, knot_x_(i, k + 1) - xk, yk, knot_y_(i, k + 1) - yk, knot_d_(i, k),
                                       knot_d_(i, k + 1));
    e.y(i) = seg.f;
    e.log_deriv(i) = seg.log_fp;
    e.dlog_deriv_dx(i) = seg.log_fp_dual.d[kX];
  }
  return e;
}

double RQSplineMap::inverse_scalar(Eigen::Index i, double y) const {
  if (y <= -bound_ || y >= bound_) return y;
  const Eigen::Index k = find_bin(knot_y_.row(i), y);
  const double xk = knot_x_(i, k);
  const double wk = knot_x_(i, k + 1) - xk;
  const double yk = knot_y_(i, k);
  const double hk = knot_y_(i, k + 1) - yk;
  const double dk = knot_d_(i, k);
  const double dk1 = knot_d_(i, k + 1);
  const double s = hk / wk;
  const double dy = y - yk;
  const double curv = dk1 + dk - 2.0 * s;
  const double a = hk * (s - dk) + dy * curv;
  const double b = hk * dk - dy * curv;
  const double c = -s * dy;
  const double disc = std::max(b * b - 4.0 * a * c, 0.0);
  // Root of a xi^2 + b xi + c = 0 on the monotone branch, written to avoid
  // cancellation (b > 0 on every valid bin).
  double xi = (2.0 * c) / (-b - std::sqrt(disc));
  xi = std::clamp(xi, 0.0, 1.0);
  return xk + xi * wk;
}

std::pair<Vector, double> RQSplineMap::inverse(const Vector& y) const {
  require_dim(y.size(), dim(), "coordwise_inverse");
  check_finite(y, "coordwise_inverse");
  Vector x(dim());
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < dim(); ++i) {
    x(i) = inverse_scalar(i, y(i));
    double lf = 0.0;
    forward_scalar(i, x(i), &lf);
    logdet -= lf;
  }
  return {x, logdet};
}

Vector RQSplineMap::params() const {
  const Eigen::Index P = params_per_coordinate();
  const int K = knots_;
  Vector p(P * dim());
  for (Eigen::Index i = 0; i < dim(); ++i) {
    const Eigen::Index o = i * P;
    for (int k = 0; k < K; ++k) {
      p(o + k) = raw_widths_(i, k);
      p(o + K + k) = raw_heights_(i, k);
    }
    for (int k = 0; k < K - 1; ++k) p(o + 2 * K + k) = raw_derivs_(i, k);
  }
  return p;
}

void RQSplineMap::set_params(const Vector& flat) {
  const Eigen::Index P = params_per_coordinate();
  const int K = knots_;
  require_dim(flat.size(), P * dim(), "RQSplineMap::set_params");
  for (Eigen::Index i = 0; i < dim(); ++i) {
    const Eigen::Index o = i * P;
    for (int k = 0; k < K; ++k) {
      raw_widths_(i, k) = flat(o + k);
      raw_heights_(i, k) = flat(o + K + k);
    }
    for (int k = 0; k < K - 1; ++k) raw_derivs_(i, k) = flat(o + 2 * K + k);
  }
  rebuild();
}

void RQSplineMap::accumulate_vjp(const Matrix& x, const Matrix& wF, const Matrix& wlog, Vector& grad) const {
  const Eigen::Index d = dim();
  const int K = knots_;
  const Eigen::Index P = params_per_coordinate();
  require_dim(grad.size(), P * d, "RQSplineMap::accumulate_vjp");
  require(x.cols() == d && wF.rows() == x.rows() && wlog.rows() == x.rows(), "RQSplineMap::accumulate_vjp shapes");

  // Adjoints of the constrained knot quantities, per coordinate.
  Matrix g_x = Matrix::Zero(d, K + 1);
  Matrix g_w = Matrix::Zero(d, K);
  Matrix g_y = Matrix::Zero(d, K + 1);
  Matrix g_h = Matrix::Zero(d, K);
  Matrix g_d = Matrix::Zero(d, K + 1);

  for (Eigen::Index n = 0; n < x.rows(); ++n) {
    for (Eigen::Index i = 0; i < d; ++i) {
      const double xi = x(n, i);
      if (xi <= -bound_ || xi >= bound_) continue;
      const double a = wF(n, i);
      const double b = wlog(n, i);
      if (a == 0.0 && b == 0.0) continue;
      const Eigen::Index k = find_bin(knot_x_.row(i), xi);
      const double xk = knot_x_(i, k);
      const double yk = knot_y_(i, k);
      const auto seg = eval_segment_dual(xi, xk, knot_x_(i, k + 1) - xk, yk, knot_y_(i, k + 1) - yk, knot_d_(i, k),
                                         knot_d_(i, k + 1));
      auto adj = [&](int slot) { return a * seg.f_dual.d[slot] + b * seg.log_fp_dual.d[slot]; };
      g_x(i, k) += adj(kXk);
      g_w(i, k) += adj(kWk);
      g_y(i, k) += adj(kYk);
      g_h(i, k) += adj(kHk);
      g_d(i, k) += adj(kDk);
      g_d(i, k + 1) += adj(kDk1);
    }
  }

  const double c = 2.0 * bound_ * (1.0 - K * kMinBinFraction);
  Eigen::RowVectorXd total_w(K);
  Eigen::RowVectorXd total_h(K);
  for (Eigen::Index i = 0; i < d; ++i) {
    // x_k = -B + sum_{j<k} w_j for 1 <= k <= K-1 (x_0 and x_K are fixed).
    double suffix_x = 0.0;
    double suffix_y = 0.0;
    for (int j = K - 1; j >= 0; --j) {
      if (j + 1 <= K - 1) {
        suffix_x += g_x(i, j + 1);
        suffix_y += g_y(i, j + 1);
      }
      total_w(j) = g_w(i, j) + suffix_x;
      total_h(j) = g_h(i, j) + suffix_y;
    }
    const double dot_w = total_w.dot(softmax_w_.row(i));
    const double dot_h = total_h.dot(softmax_h_.row(i));
    const Eigen::Index o = i * P;
    for (int l = 0; l < K; ++l) {
      grad(o + l) += c * softmax_w_(i, l) * (total_w(l) - dot_w);
      grad(o + K + l) += c * softmax_h_(i, l) * (total_h(l) - dot_h);
    }
    for (int k = 1; k < K; ++k) grad(o + 2 * K + (k - 1)) += g_d(i, k) * logistic(raw_derivs_(i, k - 1));
  }
}

ParamGrads RQSplineMap::param_grads(const Vector& x) const {
  require_dim(x.size(), dim(), "coordwise_param_grads");
  const Eigen::Index d = dim();
  const Eigen::Index P = params_per_coordinate();
  const Matrix xr = x.transpose();
  Vector gf = Vector::Zero(P * d);
  Vector gl = Vector::Zero(P * d);
  accumulate_vjp(xr, Matrix::Ones(1, d), Matrix::Zero(1, d), gf);
  accumulate_vjp(xr, Matrix::Zero(1, d), Matrix::Ones(1, d), gl);
  ParamGrads out{Matrix(d, P), Matrix(d, P)};
  for (Eigen::Index i = 0; i < d; ++i) {
    out.dF.row(i) = gf.segment(i * P, P).transpose();
    out.dlog_deriv.row(i) = gl.segment(i * P, P).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------
// CoordinatewiseMap

std::string MapFamily::to_string() const {
  if (kind == Kind::affine) return "affine";
  return "spline(knots=" + std::to_string(knots) + ",bound=" + std::to_string(bound) + ")";
}

CoordinatewiseMap CoordinatewiseMap::identity(Eigen::Index d, const MapFamily& family) {
  if (family.kind == MapFamily::Kind::affine) return CoordinatewiseMap(AffineMap(d));
  return CoordinatewiseMap(RQSplineMap(d, family.knots, family.bound));
}

Eigen::Index CoordinatewiseMap::dim() const {
  return std::visit([](const auto& m) { return m.dim(); }, impl_);
}

Eigen::Index CoordinatewiseMap::param_count() const {
  return std::visit([](const auto& m) { return m.params_per_coordinate() * m.dim(); }, impl_);
}

Vector CoordinatewiseMap::params() const {
  return std::visit([](const auto& m) { return m.params(); }, impl_);
}

void CoordinatewiseMap::set_params(const Vector& flat) {
  std::visit([&](auto& m) { m.set_params(flat); }, impl_);
}

CoordEval CoordinatewiseMap::evaluate(const Vector& x) const {
  return std::visit([&](const auto& m) { return m.evaluate(x); }, impl_);
}

std::pair<Vector, double> CoordinatewiseMap::forward(const Vector& x) const {
  CoordEval e = evaluate(x);
  return {std::move(e.y), e.logdet()};
}

std::pair<Vector, double> CoordinatewiseMap::inverse(const Vector& y) const {
  return std::visit([&](const auto& m) { return m.inverse(y); }, impl_);
}

ParamGrads CoordinatewiseMap::param_grads(const Vector& x) const {
  return std::visit([&](const auto& m) { return m.param_grads(x); }, impl_);
}

void CoordinatewiseMap::accumulate_vjp(const Matrix& x, const Matrix& wF, const Matrix& wlog, Vector& grad) const {
  std::visit([&](const auto& m) { m.accumulate_vjp(x, wF, wlog, grad); }, impl_);
}

std::pair<Vector, double> coordwise_forward(const CoordinatewiseMap& m, const Vector& x) { return m.forward(x); }
std::pair<Vector, double> coordwise_inverse(const CoordinatewiseMap& m, const Vector& y) { return m.inverse(y); }
Vector coordwise_dlogdet_dx(const CoordinatewiseMap& m, const Vector& x) { return m.evaluate(x).dlog_deriv_dx; }
ParamGrads coordwise_param_grads(const CoordinatewiseMap& m, const Vector& x) { return m.param_grads(x); }

}  // namespace igauss
