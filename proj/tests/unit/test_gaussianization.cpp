#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "igauss/diagnostics.hpp"
#include "igauss/serialization.hpp"
#include "test_util.hpp"

using namespace igauss;

namespace {

struct StdNormal final : TargetDistribution {
  explicit StdNormal(Eigen::Index d) : d_(d) {}
  Eigen::Index dim() const override { return d_; }
  double log_density(const Vector& x) const override { return -0.5 * x.squaredNorm(); }
  Vector score(const Vector& x) const override { return -x; }
  Eigen::Index d_;
};

std::shared_ptr<const GaussianTarget> correlated_2d() {
  Matrix cov(2, 2);
  cov << 2.0, 1.2, 1.2, 1.0;
  return std::make_shared<const GaussianTarget>(Vector{{0.5, -0.3}}, cov);
}

GaussianizationOptions affine_opts() {
  GaussianizationOptions o;
  o.family = MapFamily::affine();
  o.mfvi.steps = 600;
  o.mfvi.learning_rate = 0.05;
  return o;
}

}  // namespace

TEST_CASE("PCA iteration Gaussianizes a correlated 2-d Gaussian in one step") {
  auto g = correlated_2d();
  const double kl0 = affine_gaussian_kl(TransportChain(2), *g).value();
  CHECK(kl0 > 0.5);
  const GaussianizationRun run = run_gaussianization(g, 1, RotationStrategy::pca(), affine_opts(), 1);
  REQUIRE(run.iterations() == 1);
  CHECK(affine_gaussian_kl(run.chain(), *g).value() <= 0.01);
  const IterationRecord& r = run.records().front();
  CHECK(r.strategy == "pca");
  CHECK(r.rank >= 1);
  CHECK(r.eigenvalues.size() == 2);
  // ELBO of an almost exact fit is close to log Z_p = log(2 pi) + 1/2 log |Sigma|.
  const double log_z = std::log(2 * std::numbers::pi) + 0.5 * std::log(g->covariance().determinant());
  CHECK(std::abs(r.elbo - log_z) < 0.02);
}

TEST_CASE("identity strategy leaves correlation in place") {
  auto g = correlated_2d();
  const GaussianizationRun one = run_gaussianization(g, 1, RotationStrategy::identity(), affine_opts(), 2);
  const GaussianizationRun three = run_gaussianization(g, 3, RotationStrategy::identity(), affine_opts(), 2);
  CHECK(one.chain().layers()[0].rotation.to_dense() == Matrix::Identity(2, 2));
  // The mean-field floor for correlation rho: -1/2 log(1 - rho^2).
  const double rho2 = 1.2 * 1.2 / 2.0;
  const double floor = -0.5 * std::log(1 - rho2);
  CHECK(affine_gaussian_kl(one.chain(), *g).value() == doctest::Approx(floor).epsilon(0.05));
  CHECK(affine_gaussian_kl(three.chain(), *g).value() == doctest::Approx(floor).epsilon(0.05));
}

TEST_CASE("random rotations decrease the KL over iterations") {
  RandomStream rng(3);
  auto g = std::make_shared<const GaussianTarget>(make_conditioned_gaussian(4, 10.0, rng));
  const GaussianizationRun run = run_gaussianization(g, 6, RotationStrategy::random(), affine_opts(), 4);
  double prev = affine_gaussian_kl(TransportChain(4), *g).value();
  for (std::size_t k = 1; k <= 6; ++k) {
    const double kl = affine_gaussian_kl(run.prefix(k).chain(), *g).value();
    // The training batch adds small Monte Carlo noise to the exact monotone recursion.
    CHECK(kl <= prev + 5e-3);
    prev = kl;
  }
  CHECK(prev < 0.5 * affine_gaussian_kl(TransportChain(4), *g).value());
}

TEST_CASE("extending a run reproduces a fresh longer run") {
  RandomStream rng(5);
  auto g = std::make_shared<const GaussianTarget>(make_conditioned_gaussian(3, 6.0, rng));
  GaussianizationOptions o;
  o.mfvi.mc_batch = 300;
  o.mfvi.steps = 30;
  for (const auto& s : {RotationStrategy::pca(), RotationStrategy::random()}) {
    GaussianizationRun a = run_gaussianization(g, 2, s, o, 77);
    extend_run(a, 3, s, o);
    const GaussianizationRun b = run_gaussianization(g, 3, s, o, 77);
    CHECK(chain_to_json(a.chain()).dump() == chain_to_json(b.chain()).dump());
    CHECK(chain_to_json(b.prefix(2).chain()).dump() == chain_to_json(run_gaussianization(g, 2, s, o, 77).chain()).dump());
    extend_run(a, 2, s, o);
    CHECK(a.iterations() == 3);
  }
}

TEST_CASE("restore round-trips a run") {
  RandomStream rng(6);
  auto g = std::make_shared<const GaussianTarget>(make_conditioned_gaussian(2, 3.0, rng));
  GaussianizationOptions o;
  o.mfvi.mc_batch = 200;
  o.mfvi.steps = 20;
  const GaussianizationRun a = run_gaussianization(g, 2, RotationStrategy::pca(), o, 8);
  const GaussianizationRun r =
      GaussianizationRun::restore(g, 8, chain_from_json(chain_to_json(a.chain())), a.records());
  GaussianizationRun ea = a, er = r;
  extend_run(ea, 3, RotationStrategy::pca(), o);
  extend_run(er, 3, RotationStrategy::pca(), o);
  CHECK(chain_to_json(ea.chain()).dump() == chain_to_json(er.chain()).dump());
}

TEST_CASE("sample_q and log_q agree and q is normalized") {
  RandomStream rng(7);
  TransportChain c(2);
  c.push_back(TransportLayer(sample_haar_rotation(2, rng), testutil::random_spline(2, 8, 4.0, rng, 0.8)));
  c.push_back(TransportLayer(sample_haar_rotation(2, rng), AffineMap(Vector{{0.3, -0.2}}, Vector{{0.2, -0.4}})));
  const QSamples s = sample_q(c, 200, rng);
  for (Eigen::Index i = 0; i < 200; ++i) CHECK(std::abs(log_q(c, s.x.row(i).transpose()) - s.log_q(i)) <= 1e-8);

  TransportChain one(1);
  one.push_back(TransportLayer(Rotation::identity(1), testutil::random_spline(1, 8, 3.0, rng, 1.0)));
  double integral = 0.0;
  const double step = 1e-3;
  for (double x = -20; x <= 20; x += step) integral += std::exp(log_q(one, Vector::Constant(1, x))) * step;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(log_std_normal(Vector::Zero(2)) == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-15));
}

TEST_CASE("importance weights") {
  const Vector w = importance_weights_from_log_ratios(Vector{{std::log(2.0), 0.0, 0.0}});
  CHECK(w(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w(1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w(2) == doctest::Approx(0.25).epsilon(1e-15));
  // Shift invariance and overflow safety.
  const Vector big = importance_weights_from_log_ratios(Vector{{1000.0 + std::log(2.0), 1000.0, 1000.0}});
  CHECK((big - w).norm() < 1e-12);
  CHECK_THROWS_AS(importance_weights_from_log_ratios(Vector::Constant(2, -INFINITY)), NumericalError);

  const GaussianTarget g(Vector::Zero(1), Matrix::Identity(1, 1));
  Matrix x(2, 1);
  x << 0.0, 1.0;
  const Vector iw = importance_weights(g, x, Vector{{-0.5, -1.0}});
  // log ratios 0.5 and 0.5: equal weights.
  CHECK(iw(0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("the standard Gaussian is a fixed point") {
  auto base = std::make_shared<const StdNormal>(3);
  GaussianizationOptions o;
  o.mfvi.mc_batch = 300;
  o.mfvi.steps = 30;
  const GaussianizationRun run = run_gaussianization(base, 1, RotationStrategy::pca(), o, 9);
  REQUIRE(run.iterations() == 1);
  // The relative score vanishes identically, so H is exactly zero and no direction is selected.
  CHECK(run.records()[0].rank == 0);
  CHECK(run.records()[0].eigenvalues.cwiseAbs().maxCoeff() == 0.0);
  CHECK(run.chain().layers()[0].rotation.to_dense() == Matrix::Identity(3, 3));
  o.early_stop_eigen_threshold = 1e-6;
  GaussianizationRun stop(base, 9);
  CHECK_FALSE(run_iteration(stop, RotationStrategy::pca(), o));
  CHECK(stop.iterations() == 0);
  CHECK(stop.stopped_early());
}

TEST_CASE("current target is the pulled-back base") {
  auto g = correlated_2d();
  GaussianizationOptions o;
  o.mfvi.mc_batch = 200;
  o.mfvi.steps = 20;
  const GaussianizationRun run = run_gaussianization(g, 2, RotationStrategy::random(), o, 10);
  const PullbackTarget t = run.current_target();
  RandomStream rng(11);
  for (int i = 0; i < 5; ++i) {
    const Vector y = rng.normal_vector(2);
    CHECK(t.log_density(y) == pullback_log_density(run.chain(), *g, y));
  }
}
