// Simulation-study machinery and the Metropolis reference sampler.

#include <doctest.h>

#include <cmath>

#include "spatgev/simstudy.hpp"
#include "spatgev/rng.hpp"

using namespace spatgev;

namespace {

// Independent Gaussian coordinates with no hyperparameters; the posterior
// is the distribution itself, giving closed-form moments for the sampler.
class PlainGaussian final : public laplace::Objective {
 public:
  PlainGaussian(Eigen::VectorXd mu, double sigma)
      : mu_(std::move(mu)), sigma_(sigma) {}
  int latent_dim() const override { return static_cast<int>(mu_.size()); }
  int theta_dim() const override { return 0; }
  double value(const Eigen::VectorXd& u,
               const Eigen::VectorXd&) const override {
    return -0.5 * (u - mu_).squaredNorm() / (sigma_ * sigma_);
  }
  Eigen::VectorXd grad(const Eigen::VectorXd& u,
                       const Eigen::VectorXd&) const override {
    return -(u - mu_) / (sigma_ * sigma_);
  }
  Eigen::MatrixXd hess(const Eigen::VectorXd& u,
                       const Eigen::VectorXd&) const override {
    return -Eigen::MatrixXd::Identity(u.size(), u.size()) /
           (sigma_ * sigma_);
  }

 private:
  Eigen::VectorXd mu_;
  double sigma_;
};

class NeverFeasible final : public laplace::Objective {
 public:
  int latent_dim() const override { return 2; }
  int theta_dim() const override { return 0; }
  double value(const Eigen::VectorXd&, const Eigen::VectorXd&) const override {
    return -std::numeric_limits<double>::infinity();
  }
  Eigen::VectorXd grad(const Eigen::VectorXd&,
                       const Eigen::VectorXd&) const override {
    return Eigen::VectorXd::Zero(2);
  }
  Eigen::MatrixXd hess(const Eigen::VectorXd&,
                       const Eigen::VectorXd&) const override {
    return Eigen::MatrixXd::Zero(2, 2);
  }
};

}  // namespace

TEST_CASE("true_surfaces closed-form spot checks") {
  const SurfaceSpec spec;
  // At the bump center mu0 the quadratic term vanishes:
  // a = -0.2 log(2 pi) - 0.1 log 4 + 6.
  auto [a0, b0] = true_surfaces({{4.0, 4.0}}, spec);
  const double expect_a =
      -0.2 * std::log(2.0 * M_PI) - 0.1 * std::log(4.0) + 6.0;
  CHECK(a0[0] == doctest::Approx(expect_a).epsilon(1e-12));
  CHECK(expect_a == doctest::Approx(5.4937952).epsilon(1e-7));

  // At mu1 the second mixture bump is negligible at double precision:
  // b = 0.07 log(0.64 / sqrt(0.25)) + 0.14.
  auto [a1, b1] = true_surfaces({{1.0, 0.0}}, spec);
  CHECK(b1[0] ==
        doctest::Approx(0.07 * std::log(1.28) + 0.14).epsilon(1e-12));

  // The a surface decreases away from its center.
  auto [a2, b2] = true_surfaces({{4.0, 4.0}, {6.0, 4.0}, {9.0, 9.0}}, spec);
  CHECK(a2[0] > a2[1]);
  CHECK(a2[1] > a2[2]);

  CHECK_THROWS_AS(true_surfaces({{std::nan(""), 0.0}}, spec), ValidationError);
}

TEST_CASE("make_lattice") {
  const Coords g = make_lattice(3, 0.0, 1.0);
  REQUIRE(g.size() == 9);
  CHECK(g[0].x == doctest::Approx(0.0));
  CHECK(g[0].y == doctest::Approx(0.0));
  CHECK(g[1].x == doctest::Approx(0.0));
  CHECK(g[1].y == doctest::Approx(0.5));
  CHECK(g[8].x == doctest::Approx(1.0));
  CHECK(g[8].y == doctest::Approx(1.0));
  CHECK(make_lattice(20, 0.0, 10.0).size() == 400);
  CHECK_THROWS_AS(make_lattice(1, 0.0, 1.0), ValidationError);
}

TEST_CASE("simulate_dataset determinism, support, and mean") {
  const Coords coords = {{0.0, 0.0}, {1.0, 1.0}};
  Eigen::VectorXd a(2), b(2);
  a << 1.0, 2.0;
  b << -0.5, 0.3;
  const ShapeParam shape = ShapeParam::log_shape(std::log(0.2));

  const SiteDataset d1 = simulate_dataset(coords, a, b, shape, 25, 99);
  const SiteDataset d2 = simulate_dataset(coords, a, b, shape, 25, 99);
  CHECK(d1.obs == d2.obs);
  CHECK(d1.n_sites() == 2);
  CHECK(d1.n_obs_total() == 50);

  // Positive shape: all draws above the finite lower support bound.
  for (int i = 0; i < 2; ++i) {
    const double bound = a[i] - std::exp(b[i]) / 0.2;
    for (double y : d1.obs[i]) CHECK(y > bound);
  }

  // Sample mean against the analytic GEV mean a + b_o (Gamma(1-s)-1)/s.
  const int n = 50000;
  const SiteDataset big =
      simulate_dataset({{0.0, 0.0}}, a.head(1), b.head(1), shape, n, 7);
  const double g1 = std::tgamma(1.0 - 0.2);
  const double g2 = std::tgamma(1.0 - 0.4);
  const double b_o = std::exp(b[0]);
  const double mean = a[0] + b_o * (g1 - 1.0) / 0.2;
  const double var = b_o * b_o * (g2 - g1 * g1) / (0.2 * 0.2);
  double s = 0.0;
  for (double y : big.obs[0]) s += y;
  CHECK(std::abs(s / n - mean) < 3.0 * std::sqrt(var / n));

  Eigen::VectorXd short_a(1);
  short_a << 1.0;
  CHECK_THROWS_AS(simulate_dataset(coords, short_a, b, shape, 5, 1),
                  ValidationError);
  CHECK_THROWS_AS(simulate_dataset(coords, a, b, shape, 0, 1),
                  ValidationError);
}

TEST_CASE("metrics on hand-built fits") {
  GevFit fit;
  fit.spec = ModelSpec::m2();
  fit.n_sites = 2;
  fit.fit.u_hat = Eigen::VectorXd(4);
  fit.fit.u_hat << 1.0, 2.0, -0.5, 0.5;
  fit.fit.theta_hat = Eigen::VectorXd::Zero(4);

  Eigen::VectorXd a_true(2), b_true(2);
  a_true << 1.0, 2.0;
  b_true << -0.5, 0.5;
  const MetricsReport zero = metrics(fit, a_true, b_true, {});
  CHECK(zero.mae_a == doctest::Approx(0.0));
  CHECK(zero.mae_b == doctest::Approx(0.0));
  CHECK(!zero.ae_s.has_value());

  a_true << 1.2, 2.0;   // errors 0.2 and 0
  b_true << -0.5, 0.1;  // errors 0 and 0.4
  const MetricsReport off = metrics(fit, a_true, b_true, {});
  CHECK(off.mae_a == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(off.mae_b == doctest::Approx(0.2).epsilon(1e-12));

  // Fixed-b variant compares the truth against the estimated constant.
  GevFit f4;
  f4.spec = ModelSpec::m4();
  f4.n_sites = 2;
  f4.fit.u_hat = Eigen::VectorXd(2);
  f4.fit.u_hat << 1.0, 2.0;
  f4.fit.theta_hat = Eigen::VectorXd(3);
  f4.fit.theta_hat << 0.0, 0.0, 0.3;
  const MetricsReport r4 = metrics(f4, a_true, b_true, {});
  CHECK(r4.mae_b == doctest::Approx(0.5 * (0.8 + 0.2)).epsilon(1e-12));

  // Estimated-shape variant reports the absolute shape error.
  GevFit f1;
  f1.spec = ModelSpec::m1();
  f1.n_sites = 2;
  f1.fit.u_hat = fit.fit.u_hat;
  f1.fit.theta_hat = Eigen::VectorXd::Zero(5);
  f1.fit.theta_hat[0] = -2.0;
  const MetricsReport r1 = metrics(f1, a_true, b_true, -2.5);
  REQUIRE(r1.ae_s.has_value());
  CHECK(*r1.ae_s == doctest::Approx(0.5).epsilon(1e-12));

  Eigen::VectorXd wrong(3);
  CHECK_THROWS_AS(metrics(fit, wrong, b_true, {}), ValidationError);
}

TEST_CASE("metropolis_reference recovers closed-form Gaussian moments") {
  Eigen::VectorXd mu(2);
  mu << 0.5, -0.3;
  const double sigma = 1.0;
  PlainGaussian g(mu, sigma);
  MetropolisOptions opts;
  opts.n_steps = 200000;
  const auto res = metropolis_reference(g, Eigen::VectorXd::Zero(2),
                                        Eigen::VectorXd(0), 13, opts);
  CHECK(res.u_dim == 2);
  CHECK(res.theta_dim == 0);
  CHECK(res.max_split_rhat <= 1.1);
  for (int k = 0; k < 2; ++k) {
    CHECK(res.accept_rate[k] > 0.1);
    CHECK(res.accept_rate[k] < 0.6);
    CHECK(std::abs(res.mean[k] - mu[k]) < 0.05);
    CHECK(res.sd[k] == doctest::Approx(sigma).epsilon(0.05));
  }

  // Determinism under a fixed seed.
  const auto res2 = metropolis_reference(g, Eigen::VectorXd::Zero(2),
                                         Eigen::VectorXd(0), 13, opts);
  CHECK((res.mean - res2.mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("metropolis_reference refusals") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(30);
  PlainGaussian big(mu, 1.0);
  CHECK_THROWS_AS(metropolis_reference(big, mu, Eigen::VectorXd(0), 1),
                  ValidationError);

  PlainGaussian g(Eigen::VectorXd::Zero(2), 1.0);
  MetropolisOptions few;
  few.n_steps = 100;
  CHECK_THROWS_AS(metropolis_reference(g, Eigen::VectorXd::Zero(2),
                                       Eigen::VectorXd(0), 1, few),
                  ValidationError);

  CHECK_THROWS_AS(metropolis_reference(NeverFeasible(),
                                       Eigen::VectorXd::Zero(2),
                                       Eigen::VectorXd(0), 1),
                  NumericError);

  CHECK_THROWS_AS(metropolis_reference(g, Eigen::VectorXd::Zero(3),
                                       Eigen::VectorXd(0), 1),
                  ValidationError);
}
