// Nested Laplace engine, checked against a conjugate Gaussian surrogate
// (where the approximation is exact) and low-dimensional quadrature.

#include <doctest.h>

#include <cmath>

#include "spatgev/laplace.hpp"
#include "spatgev/model.hpp"
#include "spatgev/rng.hpp"
#include "support/surrogate.hpp"

using namespace spatgev;
using testsupport::GaussianSurrogate;

namespace {

Coords random_coords(int n, std::uint64_t seed, double scale = 4.0) {
  auto rng = make_rng(seed);
  Coords c(n);
  for (auto& p : c) {
    p.x = scale * uniform_open(rng);
    p.y = scale * uniform_open(rng);
  }
  return c;
}

GaussianSurrogate make_surrogate(int n, std::uint64_t seed, double tau2) {
  auto rng = make_rng(seed + 1000);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = standard_normal(rng);
  return GaussianSurrogate(random_coords(n, seed), y, tau2);
}

}  // namespace

TEST_CASE("inner optimizer finds the exact Gaussian mode") {
  const GaussianSurrogate s = make_surrogate(7, 1, 0.5);
  Eigen::VectorXd theta(2);
  theta << 0.2, -0.3;
  const auto res = laplace::inner_optimize(s, theta);
  CHECK(res.converged);
  const Eigen::VectorXd mode = s.analytic_mode(theta);
  CHECK((res.u_opt - mode).cwiseAbs().maxCoeff() < 1e-8);

  // -H Cholesky factor and log-det agree with a dense recomputation.
  const Eigen::MatrixXd neg_h = -s.hess(res.u_opt, theta);
  const Eigen::MatrixXd rebuilt =
      res.neg_hess_lower * res.neg_hess_lower.transpose();
  CHECK((rebuilt - neg_h).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(res.neg_hess_log_det ==
        doctest::Approx(std::log(neg_h.determinant())).epsilon(1e-9));
  CHECK(res.g_at_opt == doctest::Approx(s.value(res.u_opt, theta)));

  // Warm start at the optimum: at most one further iteration.
  const auto warm = laplace::inner_optimize(s, theta, res.u_opt);
  CHECK(warm.converged);
  CHECK(warm.iterations <= 1);
  CHECK((warm.u_opt - mode).cwiseAbs().maxCoeff() < 1e-8);

  // A terrible starting point still converges.
  const auto far = laplace::inner_optimize(
      s, theta, Eigen::VectorXd::Constant(7, 50.0));
  CHECK(far.converged);
  CHECK((far.u_opt - mode).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("prior-only objective has mode zero") {
  // y = 0 makes the likelihood and prior both peak at u = 0.
  GaussianSurrogate s(random_coords(5, 2), Eigen::VectorXd::Zero(5), 1.0);
  const auto res = laplace::inner_optimize(s, Eigen::VectorXd::Zero(2));
  CHECK(res.converged);
  CHECK(res.u_opt.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("Laplace marginal likelihood is exact for the Gaussian model") {
  const GaussianSurrogate s = make_surrogate(6, 3, 0.7);
  auto rng = make_rng(4);
  for (int rep = 0; rep < 8; ++rep) {
    Eigen::VectorXd theta(2);
    theta << 0.5 * standard_normal(rng), 0.5 * standard_normal(rng);
    const auto [logml, inner] = laplace::laplace_logml(s, theta);
    CHECK(inner.converged);
    CHECK(logml == doctest::Approx(s.analytic_logml(theta)).epsilon(1e-8));
  }
}

TEST_CASE("Laplace logml tracks 2-D quadrature for a single-site fit") {
  // One Gumbel site with 100 replicates: integrate exp(G(a, b)) over the
  // two latent coordinates directly and compare. The Laplace error decays
  // like 1/n; at n = 100 it sits well inside the tolerance below.
  SiteDataset data;
  data.coords = {{0.0, 0.0}};
  data.obs.resize(1);
  {
    GevParams truth(0.0, 0.0, ShapeParam::gumbel());
    for (double y : gev_sample(truth, 100, 321)) data.obs[0].push_back(y);
  }
  GevObjective obj(data, ModelSpec::m2(), {});
  const Eigen::VectorXd theta = Eigen::VectorXd::Zero(4);

  const auto [logml, inner] = laplace::laplace_logml(obj, theta);
  REQUIRE(inner.converged);

  const double a0 = inner.u_opt[0], b0 = inner.u_opt[1];
  auto integrand_b = [&](double a) {
    auto f = [&](double b) {
      Eigen::VectorXd u(2);
      u << a, b;
      return std::exp(obj.value(u, theta) - inner.g_at_opt);
    };
    return testsupport::adaptive_simpson(f, b0 - 3.0, b0 + 3.0, 1e-9);
  };
  const double integral =
      testsupport::adaptive_simpson(integrand_b, a0 - 3.0, a0 + 3.0, 1e-8);
  const double quad_logml = inner.g_at_opt + std::log(integral);
  CHECK(std::abs(logml - quad_logml) < 0.015);
}

TEST_CASE("outer optimizer recovers the analytic-marginal maximizer") {
  const GaussianSurrogate s = make_surrogate(8, 5, 0.4);
  Eigen::VectorXd t0(2);
  t0 << 0.0, 0.0;
  const auto fit = laplace::outer_optimize(s, t0);
  CHECK(fit.converged);
  CHECK(fit.logml ==
        doctest::Approx(s.analytic_logml(fit.theta_hat)).epsilon(1e-8));

  // Stationarity of the analytic marginal at theta_hat.
  for (int j = 0; j < 2; ++j) {
    const double h = 1e-4;
    Eigen::VectorXd tp = fit.theta_hat, tm = fit.theta_hat;
    tp[j] += h;
    tm[j] -= h;
    const double g = (s.analytic_logml(tp) - s.analytic_logml(tm)) / (2 * h);
    CHECK(std::abs(g) < 2e-3);
    CHECK(s.analytic_logml(fit.theta_hat) >= s.analytic_logml(tp) - 1e-8);
    CHECK(s.analytic_logml(fit.theta_hat) >= s.analytic_logml(tm) - 1e-8);
  }

  // V_u is (-H)^{-1} at the mode.
  const Eigen::MatrixXd neg_h = -s.hess(fit.u_hat, fit.theta_hat);
  CHECK((fit.v_u * neg_h - Eigen::MatrixXd::Identity(8, 8))
            .cwiseAbs()
            .maxCoeff() < 1e-8);
  CHECK((fit.u_hat - s.analytic_mode(fit.theta_hat)).cwiseAbs().maxCoeff() <
        1e-7);

  // V_theta is symmetric positive definite.
  CHECK((fit.v_theta - fit.v_theta.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.v_theta);
  CHECK(es.eigenvalues().minCoeff() > 0.0);

  // J_u matches re-optimized modes under theta perturbations.
  for (int j = 0; j < 2; ++j) {
    const double h = 1e-4;
    Eigen::VectorXd tp = fit.theta_hat, tm = fit.theta_hat;
    tp[j] += h;
    tm[j] -= h;
    const Eigen::VectorXd fd =
        (s.analytic_mode(tp) - s.analytic_mode(tm)) / (2 * h);
    CHECK((fit.j_u.col(j) - fd).cwiseAbs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("cross derivative matches the analytic formula") {
  const GaussianSurrogate s = make_surrogate(6, 6, 0.9);
  auto rng = make_rng(7);
  Eigen::VectorXd theta(2), u(6);
  theta << 0.3, -0.2;
  for (int i = 0; i < 6; ++i) u[i] = standard_normal(rng);
  const Eigen::MatrixXd fd = laplace::cross_deriv_u_theta(s, u, theta);
  const Eigen::MatrixXd exact = s.analytic_cross(u, theta);
  CHECK((fd - exact).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("nearest_pd") {
  Eigen::MatrixXd pd(2, 2);
  pd << 2.0, 0.3, 0.3, 1.0;
  CHECK((laplace::nearest_pd(pd) - pd).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  const Eigen::MatrixXd proj = laplace::nearest_pd(indef, 1e-6);
  CHECK((proj - proj.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(proj);
  CHECK(es.eigenvalues().minCoeff() >= 1e-6 - 1e-12);
  CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("joint posterior assembles the expected block structure") {
  const GaussianSurrogate s = make_surrogate(5, 8, 0.6);
  const auto fit = laplace::outer_optimize(s, Eigen::VectorXd::Zero(2));
  REQUIRE(fit.converged);
  const auto joint = laplace::joint_posterior(fit);
  CHECK(joint.u_dim == 5);
  CHECK(joint.theta_dim == 2);
  CHECK((joint.mean.head(5) - fit.u_hat).cwiseAbs().maxCoeff() == 0.0);
  CHECK((joint.mean.tail(2) - fit.theta_hat).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd uu =
      fit.v_u + fit.j_u * fit.v_theta * fit.j_u.transpose();
  const Eigen::MatrixXd ut = fit.j_u * fit.v_theta;
  CHECK((joint.cov.topLeftCorner(5, 5) - uu).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((joint.cov.topRightCorner(5, 2) - ut).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((joint.cov.bottomRightCorner(2, 2) - fit.v_theta)
            .cwiseAbs()
            .maxCoeff() < 1e-10);
  CHECK((joint.cov - joint.cov.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd rebuilt = joint.cov_lower * joint.cov_lower.transpose();
  if (!joint.repaired) {
    CHECK((rebuilt - joint.cov).cwiseAbs().maxCoeff() < 1e-10);
  }
  // The factor must be usable either way.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(rebuilt);
  CHECK(es.eigenvalues().minCoeff() >= 0.0);
}

TEST_CASE("scaling the data shifts the maximized logml by -N log c") {
  // Gumbel with fixed log-scale: y -> c*y maps to a -> c*a, b -> b + log c,
  // which the free hyperparameters absorb exactly, so the maximized
  // marginal only picks up the Jacobian of the scaling.
  auto rng = make_rng(17);
  SiteDataset data;
  data.coords = random_coords(6, 18);
  data.obs.resize(6);
  GevParams truth(1.0, 0.0, ShapeParam::gumbel());
  for (int i = 0; i < 6; ++i) {
    for (double y : gev_sample(truth, 4, 500 + i)) data.obs[i].push_back(y);
  }
  SiteDataset scaled = data;
  const double c = 2.5;
  for (auto& site : scaled.obs) {
    for (double& y : site) y *= c;
  }
  const ModelSpec spec = ModelSpec::m4();
  GevObjective obj1(data, spec, {});
  GevObjective obj2(scaled, spec, {});
  const Eigen::VectorXd t1 = default_theta_init(data, spec);
  const Eigen::VectorXd t2 = default_theta_init(scaled, spec);
  const auto f1 = laplace::outer_optimize(obj1, t1);
  const auto f2 = laplace::outer_optimize(obj2, t2);
  REQUIRE(f1.converged);
  REQUIRE(f2.converged);
  const double n_total = 24.0;
  CHECK(f2.logml ==
        doctest::Approx(f1.logml - n_total * std::log(c)).epsilon(1e-4));
}
