// fit.hpp
// Convenience wrapper tying the GEV-GP model to the Laplace engine:
// builds the objective, picks defaults, runs the nested optimization,
// and assembles the joint Normal posterior.

#ifndef SPATGEV_FIT_HPP
#define SPATGEV_FIT_HPP

#include <optional>

#include "spatgev/laplace.hpp"
#include "spatgev/model.hpp"

namespace spatgev {

struct GevFit {
  ModelSpec spec;
  KernelSettings settings;
  int n_sites = 0;
  laplace::FitResult fit;
  laplace::JointNormal joint;

  Hypers hypers() const { return unflatten_theta(fit.theta_hat, spec, settings); }
  LatentField latent_mode() const {
    return LatentField::from_stacked(fit.u_hat, n_sites, spec.b_random);
  }
};

// Data-driven latent starting point: per-site observation means for a,
// the global log sample standard deviation for b.
Eigen::VectorXd make_latent_init(const SiteDataset& data,
                                 const ModelSpec& spec);

GevFit fit_gev(const SiteDataset& data, const ModelSpec& spec,
               const KernelSettings& settings = {},
               laplace::OuterOptions opts = {},
               const std::optional<Eigen::VectorXd>& theta_init = {});

}  // namespace spatgev

#endif  // SPATGEV_FIT_HPP
