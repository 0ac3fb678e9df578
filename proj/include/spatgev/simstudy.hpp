// simstudy.hpp
// Simulation-study machinery: deterministic true parameter surfaces,
// lattice generation, dataset simulation, accuracy metrics, and a
// random-walk Metropolis reference sampler used as a desk-scale posterior
// oracle.

#ifndef SPATGEV_SIMSTUDY_HPP
#define SPATGEV_SIMSTUDY_HPP

#include <cstdint>
#include <optional>

#include "spatgev/fit.hpp"
#include "spatgev/laplace.hpp"
#include "spatgev/model.hpp"

namespace spatgev {

// Constants of the deterministic a(x) and b(x) surfaces: a is a scaled
// Gaussian log-density bump centered at mu0, b is the log of a two-bump
// Gaussian mixture.
struct SurfaceSpec {
  Eigen::Vector2d mu0{4.0, 4.0};
  Eigen::Matrix2d sigma0 = 2.0 * Eigen::Matrix2d::Identity();
  Eigen::Vector2d mu1{1.0, 0.0};
  Eigen::Matrix2d sigma1 = 0.5 * Eigen::Matrix2d::Identity();
  Eigen::Vector2d mu2{8.0, 7.0};
  Eigen::Matrix2d sigma2 = Eigen::Matrix2d::Identity();
  double a_log2pi_coef = -0.2;
  double a_logdet_coef = -0.1;
  double a_quad_coef = -0.1;
  double a_offset = 6.0;
  double b_scale = 0.07;
  double b_weight1 = 0.64;
  double b_weight2 = 0.09;
  double b_offset = 0.14;
};

std::pair<Eigen::VectorXd, Eigen::VectorXd> true_surfaces(
    const Coords& coords, const SurfaceSpec& spec = {});

// side^2 points, equally spaced with endpoints included, row-major.
Coords make_lattice(int side, double lo, double hi);

SiteDataset simulate_dataset(const Coords& coords,
                             const Eigen::VectorXd& a_true,
                             const Eigen::VectorXd& b_true,
                             const ShapeParam& shape, int n_per_site,
                             std::uint64_t seed);

struct MetricsReport {
  double mae_a = 0.0;
  double mae_b = 0.0;
  std::optional<double> ae_s;  // absent for Gumbel specs
  double wall_seconds = 0.0;
};

MetricsReport metrics(const GevFit& fit, const Eigen::VectorXd& a_true,
                      const Eigen::VectorXd& b_true,
                      std::optional<double> s_true);

struct MetropolisOptions {
  long n_steps = 1000000;   // total; first half is adaptation and discarded
  double target_accept = 0.3;
  double init_scale = 0.1;
  int max_dim = 24;          // desk-scale oracle only
  double rhat_tol = 1.1;
};

struct MetropolisResult {
  Eigen::VectorXd mean;        // stacked (u, theta)
  Eigen::VectorXd sd;
  Eigen::VectorXd accept_rate;  // per coordinate, post adaptation
  double max_split_rhat = 0.0;
  int u_dim = 0;
  int theta_dim = 0;
};

// Componentwise Gaussian random-walk Metropolis on (u, theta) targeting
// exp(G(u; theta)) under the flat theta prior. Step scales adapt toward
// the target acceptance during the discarded first half. Refuses when a
// post-adaptation acceptance rate falls outside [0.1, 0.6] or the
// split-chain diagnostic fails.
MetropolisResult metropolis_reference(const laplace::Objective& obj,
                                      const Eigen::VectorXd& u_init,
                                      const Eigen::VectorXd& theta_init,
                                      std::uint64_t seed,
                                      const MetropolisOptions& opts = {});

}  // namespace spatgev

#endif  // SPATGEV_SIMSTUDY_HPP
