// Posterior sampling, return levels, prediction, and coverage.

#include <doctest.h>

#include <cmath>

#include "spatgev/posterior.hpp"
#include "spatgev/rng.hpp"
#include "spatgev/simstudy.hpp"
#include "support/surrogate.hpp"

using namespace spatgev;

namespace {

struct SmallFit {
  SiteDataset data;
  GevFit fit;
};

// A small, well-separated Gumbel fit shared by the tests below.
const SmallFit& small_fit() {
  static const SmallFit sf = [] {
    SmallFit out;
    out.data.coords = {{0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}, {3.0, 3.0}};
    out.data.obs.resize(4);
    for (int i = 0; i < 4; ++i) {
      GevParams truth(2.0 + 0.3 * i, -0.2, ShapeParam::gumbel());
      for (double y : gev_sample(truth, 12, 900 + i)) {
        out.data.obs[i].push_back(y);
      }
    }
    out.fit = fit_gev(out.data, ModelSpec::m2());
    return out;
  }();
  return sf;
}

}  // namespace

TEST_CASE("sample_quantile type-7 hand values") {
  std::vector<double> v = {3.0, 1.0, 4.0, 2.0};  // unsorted on purpose
  CHECK(sample_quantile(v, 0.0) == doctest::Approx(1.0));
  CHECK(sample_quantile(v, 1.0) == doctest::Approx(4.0));
  CHECK(sample_quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile(v, 0.25) == doctest::Approx(1.75));
  CHECK(sample_quantile({5.0}, 0.3) == doctest::Approx(5.0));
}

TEST_CASE("sample_joint moments match the joint Normal") {
  const auto& sf = small_fit();
  REQUIRE(sf.fit.fit.converged);

  const auto d1 = sample_joint(sf.fit, 50, 11);
  const auto d2 = sample_joint(sf.fit, 50, 11);
  CHECK((d1.u_draws - d2.u_draws).cwiseAbs().maxCoeff() == 0.0);
  CHECK((d1.theta_draws - d2.theta_draws).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d1.m() == 50);
  CHECK(d1.u_draws.cols() == 8);
  CHECK(d1.theta_draws.cols() == 4);

  const int m = 100000;
  const auto dr = sample_joint(sf.fit, m, 12);
  const auto& joint = sf.fit.joint;
  Eigen::MatrixXd all(m, 12);
  all << dr.u_draws, dr.theta_draws;
  const Eigen::VectorXd mean_hat = all.colwise().mean();
  for (int j = 0; j < 12; ++j) {
    const double se = std::sqrt(joint.cov(j, j) / m);
    CHECK(std::abs(mean_hat[j] - joint.mean[j]) < 4.0 * se);
  }
  const Eigen::MatrixXd centered = all.rowwise() - mean_hat.transpose();
  const Eigen::MatrixXd cov_hat =
      centered.transpose() * centered / static_cast<double>(m - 1);
  const double scale = joint.cov.diagonal().maxCoeff();
  CHECK((cov_hat - joint.cov).cwiseAbs().maxCoeff() < 0.05 * scale);
}

TEST_CASE("return_levels on hand-built degenerate draws") {
  PosteriorDraws dr;
  dr.spec = ModelSpec::m2();
  dr.n_sites = 2;
  dr.seed = 0;
  const int m = 100;
  dr.u_draws = Eigen::MatrixXd(m, 4);
  dr.theta_draws = Eigen::MatrixXd::Zero(m, 4);
  for (int k = 0; k < m; ++k) {
    dr.u_draws.row(k) << 1.0, 3.0, std::log(2.0), std::log(2.0);
  }
  const double p = 0.1;
  const double w = -std::log(1.0 - p);
  const auto rl = return_levels(dr, p);
  REQUIRE(rl.size() == 2);
  // Identical draws: zero sd, mean equals the closed-form Gumbel quantile.
  CHECK(rl[0].mean == doctest::Approx(1.0 - 2.0 * std::log(w)).epsilon(1e-12));
  CHECK(rl[1].mean == doctest::Approx(3.0 - 2.0 * std::log(w)).epsilon(1e-12));
  CHECK(rl[0].sd == doctest::Approx(0.0));
  CHECK(rl[0].ci_lo == doctest::Approx(rl[0].mean));
  CHECK(rl[0].ci_hi == doctest::Approx(rl[0].mean));
  CHECK(rl[0].site == 0);
  CHECK(rl[0].prob_upper == doctest::Approx(p));

  // Gumbel linearity: with b fixed across draws the return-level mean is
  // the a-mean mapped through the quantile formula.
  auto rng = make_rng(33);
  double a_sum = 0.0;
  for (int k = 0; k < m; ++k) {
    const double a = 1.0 + 0.5 * standard_normal(rng);
    dr.u_draws(k, 0) = a;
    a_sum += a;
  }
  const auto rl2 = return_levels(dr, p);
  CHECK(rl2[0].mean ==
        doctest::Approx(a_sum / m - 2.0 * std::log(w)).epsilon(1e-10));
  CHECK(rl2[0].sd > 0.0);
  CHECK(rl2[0].ci_lo < rl2[0].mean);
  CHECK(rl2[0].ci_hi > rl2[0].mean);
}

TEST_CASE("predict_new interpolates the drawn field at observed sites") {
  // Hand-built tight posterior with zero jitter: the GP conditional at an
  // observed site is then a point mass at the drawn latent value.
  SiteDataset data;
  data.coords = {{0.0, 0.0}, {3.0, 0.0}, {0.0, 3.0}, {3.0, 3.0}};
  data.obs.resize(4);
  for (int i = 0; i < 4; ++i) {
    GevParams truth(2.0, -0.2, ShapeParam::gumbel());
    for (double y : gev_sample(truth, 5, 600 + i)) data.obs[i].push_back(y);
  }
  GevFit fit;
  fit.spec = ModelSpec::m2();
  fit.settings.jitter = 0.0;
  fit.n_sites = 4;
  fit.fit.theta_hat = Eigen::VectorXd(4);
  fit.fit.theta_hat << -0.5, 0.3, -2.0, 0.3;
  fit.fit.u_hat = Eigen::VectorXd(8);
  fit.fit.u_hat << 2.0, 2.1, 1.9, 2.2, -0.2, -0.1, -0.3, -0.2;
  fit.fit.v_u = 0.02 * Eigen::MatrixXd::Identity(8, 8);
  fit.fit.v_theta = 1e-4 * Eigen::MatrixXd::Identity(4, 4);
  fit.fit.j_u = Eigen::MatrixXd::Zero(8, 4);
  fit.fit.converged = true;
  fit.joint = laplace::joint_posterior(fit.fit);

  PredictOptions opts;
  opts.m = 400;
  opts.seed = 21;
  opts.keep_latent = true;
  // Predict at an observed site and at a distant one.
  const Coords where = {data.coords[1], {50.0, 50.0}};
  const auto pred = predict_new(fit, data, where, opts);
  REQUIRE(pred.sites.size() == 2);
  CHECK(pred.y_draws.rows() == 400);
  CHECK(pred.y_draws.cols() == 2);
  REQUIRE(pred.a_star.cols() == 2);
  REQUIRE(pred.b_star.cols() == 2);

  // Per-draw equality against an aligned joint sample.
  const auto draws = sample_joint(fit, opts.m, opts.seed);
  for (int k = 0; k < 40; ++k) {
    CHECK(pred.a_star(k, 0) == doctest::Approx(draws.u_draws(k, 1)).epsilon(1e-8));
    CHECK(pred.b_star(k, 0) == doctest::Approx(draws.u_draws(k, 5)).epsilon(1e-8));
  }

  // The far site reverts to the GP prior: more spread than on-site.
  auto spread = [&](int col) {
    std::vector<double> v(pred.a_star.rows());
    for (int k = 0; k < pred.a_star.rows(); ++k) v[k] = pred.a_star(k, col);
    return sample_quantile(v, 0.95) - sample_quantile(v, 0.05);
  };
  CHECK(spread(1) > spread(0));
  CHECK(pred.sites[0].ok);
  CHECK(pred.sites[1].ok);
  CHECK(pred.sites[0].lo < pred.sites[0].hi);
}

TEST_CASE("log-transform models predict on the positive data scale") {
  SiteDataset raw;
  raw.coords = {{0.0, 0.0}, {2.0, 0.0}, {0.0, 2.0}, {2.0, 2.0}};
  raw.obs.resize(4);
  for (int i = 0; i < 4; ++i) {
    GevParams truth(1.0, -0.5, ShapeParam::gumbel());
    for (double z : gev_sample(truth, 25, 40 + i)) {
      raw.obs[i].push_back(std::exp(z));
    }
  }
  const SiteDataset ldata = log_transform(raw);
  const GevFit lfit = fit_gev(ldata, ModelSpec::m3());
  PredictOptions opts;
  opts.m = 300;
  opts.seed = 3;
  const auto pred = predict_new(lfit, ldata, {{1.0, 1.0}}, opts);
  REQUIRE(pred.sites.size() == 1);
  CHECK(pred.y_draws.minCoeff() > 0.0);
  CHECK(pred.sites[0].lo > 0.0);
}

TEST_CASE("coverage_check tracks the nominal level") {
  const auto& sf = small_fit();
  const std::vector<double> grid = {0.2, 0.5, 0.8, 0.95};
  const auto pts = coverage_check(sf.fit, sf.data, grid, 4000, 77);
  REQUIRE(pts.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pts[i].p_exp == doctest::Approx(grid[i]));
    CHECK(pts[i].p_obs >= 0.0);
    CHECK(pts[i].p_obs <= 1.0);
    // Loose band: only 48 observations in this toy fit.
    CHECK(std::abs(pts[i].p_obs - pts[i].p_exp) < 0.25);
  }
  CHECK(pts[3].p_obs > pts[0].p_obs);
}

TEST_CASE("default_coverage_grid") {
  const auto grid = default_coverage_grid();
  REQUIRE(grid.size() == 90);
  CHECK(grid.front() == doctest::Approx(0.10));
  CHECK(grid.back() == doctest::Approx(0.99));
  CHECK(grid[1] - grid[0] == doctest::Approx(0.01));
}
