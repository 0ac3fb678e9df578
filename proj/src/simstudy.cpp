// simstudy.cpp

#include "spatgev/simstudy.hpp"

#include <cmath>

#include "spatgev/rng.hpp"

namespace spatgev {

std::pair<Eigen::VectorXd, Eigen::VectorXd> true_surfaces(
    const Coords& coords, const SurfaceSpec& spec) {
  const int n = static_cast<int>(coords.size());
  Eigen::VectorXd a(n), b(n);
  const Eigen::Matrix2d s0i = spec.sigma0.inverse();
  const Eigen::Matrix2d s1i = spec.sigma1.inverse();
  const Eigen::Matrix2d s2i = spec.sigma2.inverse();
  const double det0 = spec.sigma0.determinant();
  const double det1 = spec.sigma1.determinant();
  const double det2 = spec.sigma2.determinant();
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d x(coords[i].x, coords[i].y);
    if (!x.allFinite()) {
      throw ValidationError("true_surfaces: coordinates must be finite");
    }
    const Eigen::Vector2d d0 = x - spec.mu0;
    a[i] = spec.a_log2pi_coef * std::log(2.0 * M_PI) +
           spec.a_logdet_coef * std::log(det0) +
           spec.a_quad_coef * d0.dot(s0i * d0) + spec.a_offset;
    const Eigen::Vector2d d1 = x - spec.mu1;
    const Eigen::Vector2d d2 = x - spec.mu2;
    const double bump1 = spec.b_weight1 / std::sqrt(det1) *
                         std::exp(-0.5 * d1.dot(s1i * d1));
    const double bump2 = spec.b_weight2 / std::sqrt(det2) *
                         std::exp(-0.5 * d2.dot(s2i * d2));
    b[i] = spec.b_scale * std::log(bump1 + bump2) + spec.b_offset;
  }
  return {std::move(a), std::move(b)};
}

Coords make_lattice(int side, double lo, double hi) {
  if (side < 2) throw ValidationError("make_lattice: side must be >= 2");
  const double step = (hi - lo) / (side - 1);
  Coords coords;
  coords.reserve(static_cast<std::size_t>(side) * side);
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      coords.push_back({lo + i * step, lo + j * step});
    }
  }
  return coords;
}

SiteDataset simulate_dataset(const Coords& coords,
                             const Eigen::VectorXd& a_true,
                             const Eigen::VectorXd& b_true,
                             const ShapeParam& shape, int n_per_site,
                             std::uint64_t seed) {
  const int n = static_cast<int>(coords.size());
  if (a_true.size() != n || b_true.size() != n) {
    throw ValidationError("simulate_dataset: surface size mismatch");
  }
  if (n_per_site < 1) {
    throw ValidationError("simulate_dataset: n_per_site must be >= 1");
  }
  SiteDataset data;
  data.coords = coords;
  data.obs.resize(n);
  for (int i = 0; i < n; ++i) {
    data.obs[i] = gev_sample(GevParams(a_true[i], b_true[i], shape),
                             n_per_site, derive_seed(seed, i));
  }
  return data;
}

MetricsReport metrics(const GevFit& fit, const Eigen::VectorXd& a_true,
                      const Eigen::VectorXd& b_true,
                      std::optional<double> s_true) {
  const int n = fit.n_sites;
  if (a_true.size() != n || (fit.spec.b_random && b_true.size() != n)) {
    throw ValidationError("metrics: truth size mismatch");
  }
  const LatentField mode = fit.latent_mode();
  MetricsReport rep;
  rep.mae_a = (mode.a_vals - a_true).cwiseAbs().mean();
  if (fit.spec.b_random) {
    rep.mae_b = (*mode.b_vals - b_true).cwiseAbs().mean();
  } else {
    const ThetaLayout lay(fit.spec);
    rep.mae_b =
        (b_true.array() - fit.fit.theta_hat[lay.b_fixed]).abs().mean();
  }
  if (s_true && fit.spec.shape == ModelSpec::Shape::EstimatedPositive) {
    const ThetaLayout lay(fit.spec);
    rep.ae_s = std::abs(fit.fit.theta_hat[lay.s] - *s_true);
  }
  rep.wall_seconds = fit.fit.diagnostics.wall_seconds;
  return rep;
}

namespace {

double split_rhat(const std::vector<double>& chain) {
  // Split the retained draws into two halves and compute the usual
  // between/within variance ratio.
  const std::size_t half = chain.size() / 2;
  if (half < 2) return 1.0;
  auto mean_var = [](const double* p, std::size_t len) {
    double m = 0.0;
    for (std::size_t i = 0; i < len; ++i) m += p[i];
    m /= len;
    double v = 0.0;
    for (std::size_t i = 0; i < len; ++i) v += (p[i] - m) * (p[i] - m);
    v /= (len - 1);
    return std::pair<double, double>(m, v);
  };
  const auto [m1, v1] = mean_var(chain.data(), half);
  const auto [m2, v2] = mean_var(chain.data() + half, half);
  const double w = 0.5 * (v1 + v2);
  const double mbar = 0.5 * (m1 + m2);
  const double b = half * ((m1 - mbar) * (m1 - mbar) + (m2 - mbar) * (m2 - mbar));
  if (w <= 0.0) return 1.0;
  const double var_plus = (half - 1.0) / half * w + b / half;
  return std::sqrt(var_plus / w);
}

}  // namespace

MetropolisResult metropolis_reference(const laplace::Objective& obj,
                                      const Eigen::VectorXd& u_init,
                                      const Eigen::VectorXd& theta_init,
                                      std::uint64_t seed,
                                      const MetropolisOptions& opts) {
  const int udim = obj.latent_dim();
  const int p = obj.theta_dim();
  const int dim = udim + p;
  if (dim > opts.max_dim) {
    throw ValidationError("metropolis_reference: dimension " +
                          std::to_string(dim) +
                          " exceeds the desk-scale cap");
  }
  if (u_init.size() != udim || theta_init.size() != p) {
    throw ValidationError("metropolis_reference: init dimension mismatch");
  }
  if (opts.n_steps < 1000) {
    throw ValidationError("metropolis_reference: too few steps");
  }

  Eigen::VectorXd x(dim);
  x << u_init, theta_init;
  auto logpost = [&](const Eigen::VectorXd& state) {
    // Proposals where the objective cannot be evaluated (e.g. numerically
    // singular covariances at extreme length-scales) are infeasible.
    try {
      return obj.value(state.head(udim), state.tail(p));
    } catch (const NumericError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  double lp = logpost(x);
  if (!std::isfinite(lp)) {
    throw NumericError("metropolis_reference: infeasible starting point");
  }

  auto rng = make_rng(seed);
  Eigen::VectorXd log_scale =
      Eigen::VectorXd::Constant(dim, std::log(opts.init_scale));
  const long warmup = opts.n_steps / 2;
  const long keep = opts.n_steps - warmup;

  std::vector<std::vector<double>> samples(dim);
  for (auto& s : samples) s.reserve(keep);
  Eigen::VectorXd accepts = Eigen::VectorXd::Zero(dim);

  Eigen::VectorXd trial = x;
  for (long step = 0; step < opts.n_steps; ++step) {
    const bool adapting = step < warmup;
    for (int k = 0; k < dim; ++k) {
      const double old = x[k];
      trial = x;
      trial[k] = old + std::exp(log_scale[k]) * standard_normal(rng);
      const double lp_trial = logpost(trial);
      const bool accept =
          std::isfinite(lp_trial) &&
          (lp_trial >= lp || uniform_open(rng) < std::exp(lp_trial - lp));
      if (accept) {
        x[k] = trial[k];
        lp = lp_trial;
        if (!adapting) accepts[k] += 1.0;
      }
      if (adapting) {
        // Robbins-Monro drift toward the target acceptance rate.
        const double gamma = 1.0 / std::sqrt(step + 10.0);
        log_scale[k] += gamma * ((accept ? 1.0 : 0.0) - opts.target_accept);
      }
    }
    if (!adapting) {
      for (int k = 0; k < dim; ++k) samples[k].push_back(x[k]);
    }
  }

  MetropolisResult res;
  res.u_dim = udim;
  res.theta_dim = p;
  res.accept_rate = accepts / static_cast<double>(keep);
  for (int k = 0; k < dim; ++k) {
    if (res.accept_rate[k] < 0.1 || res.accept_rate[k] > 0.6) {
      throw NumericError(
          "metropolis_reference: acceptance rate out of [0.1, 0.6] for "
          "coordinate " + std::to_string(k));
    }
  }
  res.mean.resize(dim);
  res.sd.resize(dim);
  res.max_split_rhat = 0.0;
  for (int k = 0; k < dim; ++k) {
    double m = 0.0;
    for (double v : samples[k]) m += v;
    m /= keep;
    double var = 0.0;
    for (double v : samples[k]) var += (v - m) * (v - m);
    var /= (keep - 1);
    res.mean[k] = m;
    res.sd[k] = std::sqrt(var);
    res.max_split_rhat = std::max(res.max_split_rhat, split_rhat(samples[k]));
  }
  if (res.max_split_rhat > opts.rhat_tol) {
    throw NumericError("metropolis_reference: split-chain diagnostic failed"
                       " (rhat = " + std::to_string(res.max_split_rhat) + ")");
  }
  return res;
}

}  // namespace spatgev
