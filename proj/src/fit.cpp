// fit.cpp

#include "spatgev/fit.hpp"

#include <cmath>
#include <limits>

namespace spatgev {

Eigen::VectorXd make_latent_init(const SiteDataset& data,
                                 const ModelSpec& spec) {
  const int n = data.n_sites();
  const int dim = spec.b_random ? 2 * n : n;
  Eigen::VectorXd u(dim);
  double sum = 0.0, sum2 = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    double m = 0.0;
    for (double y : data.obs[i]) {
      m += y;
      sum += y;
      sum2 += y * y;
      ++count;
    }
    u[i] = m / static_cast<double>(data.obs[i].size());
  }
  if (spec.b_random) {
    const double mean = sum / count;
    const double var =
        count > 1 ? (sum2 - count * mean * mean) / (count - 1) : 1.0;
    const double b0 = var > 1e-12 ? 0.5 * std::log(var) : 0.0;
    u.tail(n).setConstant(b0);
  }
  return u;
}

GevFit fit_gev(const SiteDataset& data, const ModelSpec& spec,
               const KernelSettings& settings, laplace::OuterOptions opts,
               const std::optional<Eigen::VectorXd>& theta_init) {
  GevObjective obj(data, spec, settings);
  if (!opts.u_init) opts.u_init = make_latent_init(data, spec);
  Eigen::VectorXd t0 =
      theta_init ? *theta_init : default_theta_init(data, spec);

  // With few observations per site the conditional posterior of the latent
  // field can be dominated by the degenerate GEV spike (a_i -> y_i with the
  // log-scale field collapsing) when the initial prior variance of b is too
  // loose. Probe a ladder of tighter sigma2_b starting values and keep the
  // one whose inner solve lands on the best smooth mode.
  if (!theta_init && spec.b_random) {
    const ThetaLayout lay(spec);
    laplace::InnerOptions probe = opts.inner;
    probe.max_iter = 50;
    double best = -std::numeric_limits<double>::infinity();
    double best_ls2b = t0[lay.b_sigma2];
    for (double ls2b = t0[lay.b_sigma2]; ls2b >= -6.5; ls2b -= 1.0) {
      Eigen::VectorXd trial = t0;
      trial[lay.b_sigma2] = ls2b;
      try {
        auto [logml, inner] =
            laplace::laplace_logml(obj, trial, opts.u_init, probe);
        if (logml > best) {
          best = logml;
          best_ls2b = ls2b;
          opts.u_init = inner.u_opt;
        }
      } catch (const NumericError&) {
        continue;  // spike or stall; try a tighter prior
      }
    }
    if (!std::isfinite(best)) {
      throw NumericError("fit_gev: no feasible starting point found");
    }
    t0[lay.b_sigma2] = best_ls2b;
  }

  GevFit out;
  out.spec = spec;
  out.settings = settings;
  out.n_sites = data.n_sites();
  out.fit = laplace::outer_optimize(obj, t0, opts);
  out.joint = laplace::joint_posterior(out.fit);
  return out;
}

}  // namespace spatgev
