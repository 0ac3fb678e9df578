// posterior.cpp

#include "spatgev/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "spatgev/rng.hpp"

namespace spatgev {

PosteriorDraws sample_joint(const GevFit& fit, int m, std::uint64_t seed) {
  if (m < 0) throw ValidationError("sample_joint: m must be >= 0");
  const auto& joint = fit.joint;
  const int udim = joint.u_dim;
  const int p = joint.theta_dim;
  PosteriorDraws out;
  out.spec = fit.spec;
  out.n_sites = fit.n_sites;
  out.seed = seed;
  out.u_draws.resize(m, udim);
  out.theta_draws.resize(m, p);

  auto rng = make_rng(derive_seed(seed, 0));
  Eigen::VectorXd z(udim + p);
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < z.size(); ++k) z[k] = standard_normal(rng);
    const Eigen::VectorXd draw = joint.mean + joint.cov_lower * z;
    out.u_draws.row(j) = draw.head(udim).transpose();
    out.theta_draws.row(j) = draw.tail(p).transpose();
  }
  return out;
}

double sample_quantile(std::vector<double> values, double p) {
  if (values.empty()) {
    throw ValidationError("sample_quantile: empty sample");
  }
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError("sample_quantile: p must lie in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

namespace {

struct DrawParams {
  double a;
  double b;
  ShapeParam shape;
};

// GEV parameters of site i under draw j.
DrawParams draw_params(const PosteriorDraws& d, const ThetaLayout& lay, int j,
                       int i) {
  DrawParams p{0.0, 0.0, ShapeParam::gumbel()};
  p.a = d.u_draws(j, i);
  p.b = d.spec.b_random ? d.u_draws(j, d.n_sites + i)
                        : d.theta_draws(j, lay.b_fixed);
  if (lay.s >= 0) p.shape = ShapeParam::log_shape(d.theta_draws(j, lay.s));
  return p;
}

}  // namespace

std::vector<ReturnLevelSummary> return_levels(const PosteriorDraws& draws,
                                              double prob_upper) {
  if (!(prob_upper > 0.0 && prob_upper < 1.0)) {
    throw ValidationError("return_levels: prob_upper must lie in (0, 1)");
  }
  const ThetaLayout lay(draws.spec);
  const int m = draws.m();
  if (m == 0) throw ValidationError("return_levels: no draws");
  std::vector<ReturnLevelSummary> out;
  out.reserve(draws.n_sites);
  std::vector<double> z(m);
  for (int i = 0; i < draws.n_sites; ++i) {
    double sum = 0.0, sum2 = 0.0;
    for (int j = 0; j < m; ++j) {
      const DrawParams p = draw_params(draws, lay, j, i);
      z[j] = gev_quantile(prob_upper, GevParams(p.a, p.b, p.shape));
      sum += z[j];
      sum2 += z[j] * z[j];
    }
    ReturnLevelSummary s;
    s.site = i;
    s.prob_upper = prob_upper;
    s.mean = sum / m;
    s.sd = m > 1 ? std::sqrt(std::max(0.0, (sum2 - m * s.mean * s.mean) /
                                               (m - 1)))
                 : 0.0;
    s.ci_lo = sample_quantile(z, 0.025);
    s.ci_hi = sample_quantile(z, 0.975);
    out.push_back(s);
  }
  return out;
}

PredictResult predict_new(const GevFit& fit, const SiteDataset& data,
                          const Coords& coords_new, const PredictOptions& opts) {
  if (opts.m < 1) throw ValidationError("predict_new: m must be >= 1");
  if (!(opts.p_exp > 0.0 && opts.p_exp < 1.0)) {
    throw ValidationError("predict_new: p_exp must lie in (0, 1)");
  }
  data.validate();
  const int n = data.n_sites();
  const int n_new = static_cast<int>(coords_new.size());
  const int m = opts.m;
  const bool b_random = fit.spec.b_random;

  const PosteriorDraws draws = sample_joint(fit, m, opts.seed);

  PredictResult res;
  res.sites.resize(n_new);
  res.y_draws.resize(m, n_new);
  if (opts.keep_latent) {
    res.a_star.resize(m, n_new);
    if (b_random) res.b_star.resize(m, n_new);
  }

  // One RNG stream per new site so parallel and serial runs agree.
  std::vector<std::mt19937_64> site_rng;
  site_rng.reserve(n_new);
  for (int k = 0; k < n_new; ++k) {
    site_rng.push_back(make_rng(derive_seed(opts.seed, 1 + k)));
  }

  Eigen::VectorXd mean_a(n_new), var_a(n_new), mean_b(n_new), var_b(n_new);
  for (int j = 0; j < m; ++j) {
    const Hypers h = unflatten_theta(draws.theta_draws.row(j).transpose(),
                                     fit.spec, fit.settings);
    const GpConditioner cond_a(data.coords, h.kernel_a);
    cond_a.condition(draws.u_draws.row(j).head(n).transpose(), coords_new,
                     &mean_a, &var_a);
    if (b_random) {
      const GpConditioner cond_b(data.coords, *h.kernel_b);
      cond_b.condition(draws.u_draws.row(j).tail(n).transpose(), coords_new,
                       &mean_b, &var_b);
    }
    for (int k = 0; k < n_new; ++k) {
      auto& rng = site_rng[k];
      const double a_star = mean_a[k] + std::sqrt(var_a[k]) * standard_normal(rng);
      const double b_star = b_random
                                ? mean_b[k] + std::sqrt(var_b[k]) * standard_normal(rng)
                                : *h.b_fixed;
      if (opts.keep_latent) {
        res.a_star(j, k) = a_star;
        if (b_random) res.b_star(j, k) = b_star;
      }
      double y = gev_quantile(uniform_open(rng),
                              GevParams(a_star, b_star, h.shape));
      if (fit.spec.transform == Transform::Log) y = std::exp(y);
      res.y_draws(j, k) = y;
      if (!std::isfinite(y) && res.sites[k].ok) {
        res.sites[k].ok = false;
        res.sites[k].error = "non-finite predictive draw";
      }
    }
  }

  const double tail = 0.5 * (1.0 - opts.p_exp);
  std::vector<double> col(m);
  for (int k = 0; k < n_new; ++k) {
    if (!res.sites[k].ok) continue;
    for (int j = 0; j < m; ++j) col[j] = res.y_draws(j, k);
    res.sites[k].mean = res.y_draws.col(k).mean();
    res.sites[k].lo = sample_quantile(col, tail);
    res.sites[k].hi = sample_quantile(col, 1.0 - tail);
  }
  return res;
}

std::vector<CoveragePoint> coverage_check(const GevFit& fit,
                                          const SiteDataset& data,
                                          const std::vector<double>& p_exp_grid,
                                          int m, std::uint64_t seed) {
  for (double p : p_exp_grid) {
    if (!(p > 0.0 && p < 1.0)) {
      throw ValidationError("coverage_check: p_exp values must lie in (0, 1)");
    }
  }
  PredictOptions opts;
  opts.m = m;
  opts.seed = seed;
  opts.p_exp = 0.95;  // intervals recomputed per grid point below
  const PredictResult pred = predict_new(fit, data, data.coords, opts);
  const int n = data.n_sites();

  std::vector<std::vector<double>> cols(n);
  for (int k = 0; k < n; ++k) {
    cols[k].resize(m);
    for (int j = 0; j < m; ++j) cols[k][j] = pred.y_draws(j, k);
    std::sort(cols[k].begin(), cols[k].end());
  }
  auto quantile_sorted = [](const std::vector<double>& v, double p) {
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= v.size()) return v.back();
    return v[lo] + (h - lo) * (v[lo + 1] - v[lo]);
  };

  std::vector<CoveragePoint> out;
  out.reserve(p_exp_grid.size());
  for (double p_exp : p_exp_grid) {
    const double tail = 0.5 * (1.0 - p_exp);
    int inside = 0, total = 0;
    for (int k = 0; k < n; ++k) {
      const double lo = quantile_sorted(cols[k], tail);
      const double hi = quantile_sorted(cols[k], 1.0 - tail);
      for (double y : data.obs[k]) {
        // Predictive draws are on the data scale; match it.
        const double yy =
            fit.spec.transform == Transform::Log ? std::exp(y) : y;
        ++total;
        if (yy >= lo && yy <= hi) ++inside;
      }
    }
    out.push_back({p_exp, static_cast<double>(inside) / total});
  }
  return out;
}

std::vector<double> default_coverage_grid() {
  std::vector<double> grid;
  for (int i = 10; i <= 99; ++i) grid.push_back(i / 100.0);
  return grid;
}

}  // namespace spatgev
