// posterior.hpp
// Sampling from the joint Normal posterior, return-level summaries,
// posterior prediction at unobserved sites, and coverage checking.

#ifndef SPATGEV_POSTERIOR_HPP
#define SPATGEV_POSTERIOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "spatgev/fit.hpp"

namespace spatgev {

struct PosteriorDraws {
  ModelSpec spec;
  int n_sites = 0;
  Eigen::MatrixXd u_draws;      // m x latent dim
  Eigen::MatrixXd theta_draws;  // m x theta dim
  std::uint64_t seed = 0;

  int m() const { return static_cast<int>(u_draws.rows()); }
};

PosteriorDraws sample_joint(const GevFit& fit, int m, std::uint64_t seed);

// Type-7 sample quantile (linear interpolation, h = (n-1) p).
double sample_quantile(std::vector<double> values, double p);

struct ReturnLevelSummary {
  int site = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_lo = 0.0;  // 2.5% sample quantile
  double ci_hi = 0.0;  // 97.5% sample quantile
  double prob_upper = 0.0;
};

// Per-site posterior of the return level z_p: each draw of (a_i, b_i, s)
// is mapped through the closed-form upper quantile.
std::vector<ReturnLevelSummary> return_levels(const PosteriorDraws& draws,
                                              double prob_upper);

struct PredictOptions {
  int m = 10000;
  double p_exp = 0.95;
  std::uint64_t seed = 0;
  bool keep_latent = false;  // retain conditional latent draws per site
};

struct PredictionSummary {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool ok = true;
  std::string error;
};

struct PredictResult {
  std::vector<PredictionSummary> sites;
  Eigen::MatrixXd y_draws;  // m x n_new, on the data scale
  Eigen::MatrixXd a_star;   // only when keep_latent
  Eigen::MatrixXd b_star;   // only when keep_latent and b random
};

// Posterior predictive draws at new sites via the multi-stage scheme:
// (1) draw (u, theta) from the joint Normal; (2) draw the latent GEV
// parameters at each new site from the GP conditionals given the drawn
// field; (3) draw an observation from the GEV; (4) summarize. Draws are
// exponentiated before summarizing when the model uses a log transform.
PredictResult predict_new(const GevFit& fit, const SiteDataset& data,
                          const Coords& coords_new, const PredictOptions& opts);

struct CoveragePoint {
  double p_exp = 0.0;
  double p_obs = 0.0;
};

// In-sample predictive coverage: posterior predictive intervals at every
// observed site, compared with the fraction of observations they contain.
std::vector<CoveragePoint> coverage_check(const GevFit& fit,
                                          const SiteDataset& data,
                                          const std::vector<double>& p_exp_grid,
                                          int m, std::uint64_t seed);

// The coverage grid used in the case-study protocol: {0.10, 0.11, ..., 0.99}.
std::vector<double> default_coverage_grid();

}  // namespace spatgev

#endif  // SPATGEV_POSTERIOR_HPP
