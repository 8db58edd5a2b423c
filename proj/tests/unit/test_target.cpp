#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "igauss/target.hpp"
#include "test_util.hpp"

using namespace igauss;
using testutil::fd_gradient;
using testutil::vec_rel_err;

namespace {

Matrix prec_half() {
  Matrix p(2, 2);
  p << 1, 0.5, 0.5, 1;
  return p;
}

void check_score_fd(const TargetDistribution& t, RandomStream& rng, int points = 20, double scale = 1.0) {
  for (int k = 0; k < points; ++k) {
    const Vector x = scale * rng.normal_vector(t.dim());
    const Vector g = fd_gradient([&](const Vector& y) { return t.log_density(y); }, x);
    CHECK(vec_rel_err(t.score(x), g) < 1e-4);
    Vector s;
    const double lp = t.log_density_and_score(x, s);
    CHECK(lp == doctest::Approx(t.log_density(x)).epsilon(1e-14));
    CHECK((s - t.score(x)).norm() <= 1e-12 * std::max(1.0, s.norm()));
  }
}

}  // namespace

TEST_CASE("gaussian log-density examples") {
  GaussianTarget std2(Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK(gaussian_log_density(std2, Vector::Zero(2)) == 0.0);
  CHECK(gaussian_log_density(std2, Vector::Ones(2)) == doctest::Approx(-1.0));
  GaussianTarget g(Vector::Zero(2), prec_half().inverse());
  CHECK(gaussian_log_density(g, Vector::Ones(2)) == doctest::Approx(-1.5).epsilon(1e-12));
}

TEST_CASE("gaussian score examples") {
  GaussianTarget std2(Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK((gaussian_score(std2, Vector{{2.0, -3.0}}) - Vector{{-2.0, 3.0}}).norm() < 1e-14);
  GaussianTarget shifted(Vector{{1.0, 0.0}}, Matrix::Identity(2, 2));
  CHECK(gaussian_score(shifted, Vector{{1.0, 0.0}}).norm() == 0.0);
  GaussianTarget g(Vector::Zero(2), prec_half().inverse());
  CHECK((gaussian_score(g, Vector::Ones(2)) - Vector{{-1.5, -1.5}}).norm() < 1e-12);
}

TEST_CASE("gaussian caches are consistent") {
  RandomStream rng(3);
  const GaussianTarget g = make_conditioned_gaussian(5, 30.0, rng);
  const Eigen::Index d = 5;
  CHECK((g.covariance() * g.precision() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((g.chol() * g.chol().transpose() - g.covariance()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("dimension mismatch is a contract violation") {
  GaussianTarget g(Vector::Zero(2), Matrix::Identity(2, 2));
  CHECK_THROWS_AS(g.log_density(Vector::Zero(3)), ContractViolation);
  CHECK_THROWS_AS(g.score(Vector::Zero(1)), ContractViolation);
  LogisticRegressionTarget t(Matrix::Ones(3, 2), Vector::Ones(3), 2.0);
  CHECK_THROWS_AS(t.log_density(Vector::Zero(3)), ContractViolation);
}

TEST_CASE("make_conditioned_gaussian spectrum") {
  RandomStream rng(11);
  const GaussianTarget id = make_conditioned_gaussian(2, 1.0, rng);
  CHECK((id.covariance() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);

  const GaussianTarget g3 = make_conditioned_gaussian(3, 4.0, rng);
  Eigen::SelfAdjointEigenSolver<Matrix> es(g3.covariance());
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(es.eigenvalues()(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(es.eigenvalues()(2) == doctest::Approx(2.0).epsilon(1e-12));

  for (double kappa : {1.0, 1.5, 4.0, 10.0, 100.0}) {
    for (Eigen::Index d : {2, 5, 16}) {
      const GaussianTarget g = make_conditioned_gaussian(d, kappa, rng);
      const Matrix& s = g.covariance();
      CHECK((s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
      Eigen::SelfAdjointEigenSolver<Matrix> e(s);
      const double cond = e.eigenvalues().maxCoeff() / e.eigenvalues().minCoeff();
      CHECK(std::abs(cond - kappa) <= 1e-8 * kappa);
    }
  }
  CHECK_THROWS_AS(make_conditioned_gaussian(3, 0.5, rng), ContractViolation);
}

TEST_CASE("logistic log-density examples") {
  Matrix x0 = Matrix::Zero(1, 3);
  LogisticRegressionTarget zero_logit(x0, Vector::Ones(1), 2.0);
  const Vector b{{0.3, -1.0, 2.0}};
  CHECK(logistic_log_density(zero_logit, b) == doctest::Approx(std::log(0.5) - b.squaredNorm() / 8.0).epsilon(1e-14));

  RandomStream rng(2);
  LogisticRegressionTarget bench = make_logistic_benchmark(rng);
  CHECK(logistic_log_density(bench, Vector::Zero(10)) == doctest::Approx(20 * std::log(0.5)).epsilon(1e-14));

  Matrix x1(1, 2);
  x1 << 1, 0;
  LogisticRegressionTarget one(x1, Vector::Ones(1), 2.0);
  // log S(2) - 4/8, evaluated independently.
  const double expected = -std::log1p(std::exp(-2.0)) - 0.5;
  CHECK(logistic_log_density(one, Vector{{2.0, 0.0}}) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(expected == doctest::Approx(-0.626928011).epsilon(1e-9));
}

TEST_CASE("logistic log-density is stable for huge logits") {
  Matrix x(2, 1);
  x << 1, -1;
  LogisticRegressionTarget t(x, Vector{{1.0, 1.0}}, 2.0);
  const double v = t.log_density(Vector::Constant(1, 800.0));
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-800.0 - 800.0 * 800.0 / 8.0).epsilon(1e-12));
  CHECK(t.score(Vector::Constant(1, 800.0)).allFinite());
}

TEST_CASE("logistic score examples") {
  Matrix x1(1, 2);
  x1 << 1, 0;
  LogisticRegressionTarget one(x1, Vector::Ones(1), 2.0);
  CHECK((logistic_score(one, Vector::Zero(2)) - Vector{{0.5, 0.0}}).norm() < 1e-15);

  Matrix xb(2, 2);
  xb << 1, 2, 1, 2;
  LogisticRegressionTarget balanced(xb, Vector{{1.0, 0.0}}, 2.0);
  CHECK(logistic_score(balanced, Vector::Zero(2)).norm() < 1e-15);
}

TEST_CASE("built-in scores match finite differences") {
  RandomStream rng(5);
  const GaussianTarget g = make_conditioned_gaussian(4, 10.0, rng);
  check_score_fd(g, rng);
  const GaussianTarget shifted(Vector{{1.0, -2.0, 0.5}}, Matrix::Identity(3, 3) * 2.0);
  check_score_fd(shifted, rng);
  const LogisticRegressionTarget lr = make_logistic_benchmark(rng);
  check_score_fd(lr, rng, 20, 0.5);
  auto lrp = std::make_shared<const LogisticRegressionTarget>(lr);
  const StandardizedTarget st(lrp, rng.normal_vector(10), (0.5 * rng.normal_vector(10)).array().exp());
  check_score_fd(st, rng, 20, 0.5);
}

TEST_CASE("invalid logistic data is rejected") {
  CHECK_THROWS_AS(LogisticRegressionTarget(Matrix::Ones(2, 2), Vector{{1.0, 0.5}}, 2.0), ContractViolation);
  CHECK_THROWS_AS(LogisticRegressionTarget(Matrix::Ones(2, 2), Vector{{1.0, 0.0}}, 0.0), ContractViolation);
  CHECK_THROWS_AS(LogisticRegressionTarget(Matrix::Ones(2, 2), Vector{{1.0}}, 1.0), ContractViolation);
}

TEST_CASE("benchmark logistic data") {
  RandomStream rng(8);
  const LogisticRegressionTarget t = make_logistic_benchmark(rng);
  CHECK(t.design().rows() == 20);
  CHECK(t.design().cols() == 10);
  CHECK(t.prior_sigma() == 2.0);
  const Vector d = log_spaced(10, 0.1, 10.0);
  CHECK(d(0) == 0.1);
  CHECK(d(9) == 10.0);
  for (Eigen::Index i = 1; i < 10; ++i) CHECK(std::log(d(i) / d(i - 1)) == doctest::Approx(std::log(100.0) / 9));

  // Labels are Bernoulli(1/2): mean over many datasets.
  double total = 0;
  const int reps = 500;
  for (int r = 0; r < reps; ++r) {
    RandomStream s = RandomStream(99).split(static_cast<std::uint64_t>(r));
    total += make_logistic_benchmark(s).labels().mean();
  }
  const double mean = total / reps;
  const double se = std::sqrt(0.25 / (20.0 * reps));
  CHECK(std::abs(mean - 0.5) < 3 * se);
}

TEST_CASE("benchmark logistic covariates have the stated spectrum") {
  // Pool many rows from datasets sharing U: use n large.
  RandomStream rng(21);
  LogisticDataOptions opts;
  opts.n = 200000;
  opts.d = 4;
  opts.covariate_eig_lo = 0.1;
  opts.covariate_eig_hi = 10.0;
  const LogisticRegressionTarget t = make_logistic_benchmark(rng, opts);
  const Matrix& x = t.design();
  const Matrix cov = x.transpose() * x / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.1).epsilon(0.02));
  CHECK(es.eigenvalues()(3) == doctest::Approx(10.0).epsilon(0.02));
}

TEST_CASE("laplace standardization of a Gaussian is exact") {
  Matrix cov(3, 3);
  cov << 4, 1, 0.5, 1, 2, 0.3, 0.5, 0.3, 0.25;
  const Vector mu{{1.0, -2.0, 3.0}};
  auto g = std::make_shared<const GaussianTarget>(mu, cov);
  const LaplaceResult lap = laplace_standardize(g);
  CHECK((lap.shift - mu).lpNorm<Eigen::Infinity>() < 1e-5);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(lap.scale(i) == doctest::Approx(std::sqrt(cov(i, i))).epsilon(1e-6));
  CHECK(lap.target->score(Vector::Zero(3)).lpNorm<Eigen::Infinity>() < 1e-5);
  CHECK(lap.fallback_coordinates.empty());
  CHECK(lap.hessian_positive_definite);
  // Standardized covariance has unit diagonal.
  const Vector inv = lap.scale.cwiseInverse();
  const Matrix std_cov = inv.asDiagonal() * cov * inv.asDiagonal();
  CHECK((std_cov.diagonal() - Vector::Ones(3)).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("laplace standardization converges on the logistic posterior") {
  for (std::uint64_t seed : {1, 2, 3}) {
    RandomStream rng(seed);
    auto t = std::make_shared<const LogisticRegressionTarget>(make_logistic_benchmark(rng));
    const LaplaceResult lap = laplace_standardize(t);
    CHECK(lap.score_norm_inf < 1e-6);
    CHECK(t->score(lap.shift).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((lap.scale.array() > 0).all());
  }
}

TEST_CASE("laplace falls back to unit scale where the Hessian is unusable") {
  OptimizerOptions opts;
  struct Saddle final : TargetDistribution {
    Eigen::Index dim() const override { return 2; }
    double log_density(const Vector& x) const override { return -0.5 * x(0) * x(0) + 0.5 * x(1) * x(1); }
    Vector score(const Vector& x) const override { return Vector{{-x(0), x(1)}}; }
  };
  const LaplaceResult sad = laplace_standardize(std::make_shared<const Saddle>(), opts);
  CHECK_FALSE(sad.hessian_positive_definite);
  CHECK(sad.scale(1) == 1.0);
  REQUIRE(sad.fallback_coordinates.size() == 1);
  CHECK(sad.fallback_coordinates[0] == 1);
}

TEST_CASE("standardized target maps coordinates") {
  auto g = std::make_shared<const GaussianTarget>(Vector{{1.0, 2.0}}, Matrix::Identity(2, 2));
  const StandardizedTarget st(g, Vector{{1.0, 2.0}}, Vector{{2.0, 0.5}});
  const Vector u{{0.3, -0.4}};
  CHECK((st.from_original(st.to_original(u)) - u).norm() < 1e-15);
  const double expected = g->log_density(st.to_original(u)) + std::log(2.0) + std::log(0.5);
  CHECK(st.log_density(u) == doctest::Approx(expected).epsilon(1e-14));
}
