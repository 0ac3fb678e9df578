// model.cpp

#include "spatgev/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace spatgev {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

int SiteDataset::n_obs_total() const {
  int total = 0;
  for (const auto& site : obs) total += static_cast<int>(site.size());
  return total;
}

void SiteDataset::validate() const {
  if (coords.empty()) {
    throw ValidationError("dataset: no sites");
  }
  if (obs.size() != coords.size()) {
    throw ValidationError("dataset: coords/observations size mismatch");
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].empty()) {
      throw ValidationError("dataset: site " + std::to_string(i) +
                            " has no observations");
    }
    for (double y : obs[i]) {
      if (!std::isfinite(y)) {
        throw ValidationError("dataset: non-finite observation at site " +
                              std::to_string(i));
      }
    }
  }
}

SiteDataset log_transform(const SiteDataset& data) {
  if (data.transform == Transform::Log) {
    throw ValidationError("log_transform: dataset already log-transformed");
  }
  SiteDataset out = data;
  out.transform = Transform::Log;
  for (std::size_t i = 0; i < out.obs.size(); ++i) {
    for (double& y : out.obs[i]) {
      if (!(y > 0.0)) {
        throw ValidationError("log_transform: non-positive value at site " +
                              std::to_string(i));
      }
      y = std::log(y);
    }
  }
  return out;
}

ModelSpec ModelSpec::from_name(const std::string& name) {
  if (name == "m1" || name == "M1") return m1();
  if (name == "m2" || name == "M2") return m2();
  if (name == "m3" || name == "M3") return m3();
  if (name == "m4" || name == "M4") return m4();
  throw ValidationError("unknown model variant '" + name + "'");
}

std::string ModelSpec::name() const {
  if (b_random && shape == Shape::EstimatedPositive) return "m1";
  if (b_random && transform == Transform::None) return "m2";
  if (b_random) return "m3";
  return "m4";
}

void Hypers::validate() const {
  if (kernel_b.has_value() == b_fixed.has_value()) {
    throw ValidationError("hypers: exactly one of kernel_b / b_fixed required");
  }
  if (b_fixed && !std::isfinite(*b_fixed)) {
    throw ValidationError("hypers: b_fixed must be finite");
  }
}

ThetaLayout::ThetaLayout(const ModelSpec& spec) {
  int next = 0;
  if (spec.shape == ModelSpec::Shape::EstimatedPositive) s = next++;
  a_sigma2 = next++;
  a_lambda = next++;
  if (spec.b_random) {
    b_sigma2 = next++;
    b_lambda = next++;
  } else {
    b_fixed = next++;
  }
  dim = next;
}

Eigen::VectorXd flatten_theta(const Hypers& h, const ModelSpec& spec) {
  h.validate();
  ThetaLayout lay(spec);
  Eigen::VectorXd theta(lay.dim);
  if (lay.s >= 0) theta[lay.s] = h.shape.log_value();
  theta[lay.a_sigma2] = h.kernel_a.log_sigma2;
  theta[lay.a_lambda] = h.kernel_a.log_lambda;
  if (lay.b_sigma2 >= 0) {
    theta[lay.b_sigma2] = h.kernel_b->log_sigma2;
    theta[lay.b_lambda] = h.kernel_b->log_lambda;
  }
  if (lay.b_fixed >= 0) theta[lay.b_fixed] = *h.b_fixed;
  return theta;
}

Hypers unflatten_theta(const Eigen::VectorXd& theta, const ModelSpec& spec,
                       const KernelSettings& settings) {
  ThetaLayout lay(spec);
  if (theta.size() != lay.dim) {
    throw ValidationError("theta: expected dimension " +
                          std::to_string(lay.dim));
  }
  Hypers h;
  h.shape = lay.s >= 0 ? ShapeParam::log_shape(theta[lay.s])
                       : ShapeParam::gumbel();
  h.kernel_a.log_sigma2 = theta[lay.a_sigma2];
  h.kernel_a.log_lambda = theta[lay.a_lambda];
  h.kernel_a.jitter = settings.jitter;
  h.kernel_a.form = settings.form;
  if (lay.b_sigma2 >= 0) {
    KernelConfig kb;
    kb.log_sigma2 = theta[lay.b_sigma2];
    kb.log_lambda = theta[lay.b_lambda];
    kb.jitter = settings.jitter;
    kb.form = settings.form;
    h.kernel_b = kb;
  } else {
    h.b_fixed = theta[lay.b_fixed];
  }
  return h;
}

Eigen::VectorXd LatentField::stacked() const {
  if (!b_vals) return a_vals;
  Eigen::VectorXd u(a_vals.size() + b_vals->size());
  u << a_vals, *b_vals;
  return u;
}

LatentField LatentField::from_stacked(const Eigen::VectorXd& u, int n_sites,
                                      bool b_random) {
  const int expect = b_random ? 2 * n_sites : n_sites;
  if (u.size() != expect) {
    throw ValidationError("latent field: expected stacked dimension " +
                          std::to_string(expect));
  }
  LatentField f;
  f.a_vals = u.head(n_sites);
  if (b_random) f.b_vals = u.tail(n_sites);
  return f;
}

struct GevObjective::ThetaCache {
  Eigen::VectorXd theta;
  Hypers hypers{};
  std::optional<CovMatrix> cov_a;
  std::optional<CovMatrix> cov_b;
  Eigen::MatrixXd prec_a;
  Eigen::MatrixXd prec_b;
};

GevObjective::GevObjective(SiteDataset data, ModelSpec spec,
                           KernelSettings settings)
    : data_(std::move(data)),
      spec_(spec),
      settings_(settings),
      layout_(spec) {
  data_.validate();
  if (data_.transform != spec_.transform) {
    throw ValidationError(
        "model: dataset transform does not match the model variant");
  }
}

int GevObjective::latent_dim() const {
  return spec_.b_random ? 2 * data_.n_sites() : data_.n_sites();
}

const GevObjective::ThetaCache& GevObjective::cache_for(
    const Eigen::VectorXd& theta) const {
  if (cache_ && cache_->theta.size() == theta.size() &&
      cache_->theta == theta) {
    return *cache_;
  }
  auto cache = std::make_shared<ThetaCache>();
  cache->theta = theta;
  cache->hypers = unflatten_theta(theta, spec_, settings_);
  cache->cov_a = build_cov(data_.coords, cache->hypers.kernel_a);
  cache->prec_a = cache->cov_a->inverse();
  if (spec_.b_random) {
    cache->cov_b = build_cov(data_.coords, *cache->hypers.kernel_b);
    cache->prec_b = cache->cov_b->inverse();
  }
  cache_ = std::move(cache);
  return *cache_;
}

GevParams GevObjective::site_params(const Eigen::VectorXd& u, const Hypers& h,
                                    int site) const {
  const int n = data_.n_sites();
  const double a = u[site];
  const double b = spec_.b_random ? u[n + site] : *h.b_fixed;
  return GevParams(a, b, h.shape);
}

double GevObjective::value(const Eigen::VectorXd& u,
                           const Eigen::VectorXd& theta) const {
  const ThetaCache& c = cache_for(theta);
  const int n = data_.n_sites();
  if (u.size() != latent_dim()) {
    throw ValidationError("G: latent dimension mismatch");
  }
  double g = 0.0;
  for (int i = 0; i < n; ++i) {
    const GevParams p = site_params(u, c.hypers, i);
    for (double y : data_.obs[i]) {
      const double lp = gev_logpdf(y, p);
      if (lp == -kInf) return -kInf;
      g += lp;
    }
  }
  g += mvn_logpdf(u.head(n), *c.cov_a);
  if (spec_.b_random) g += mvn_logpdf(u.tail(n), *c.cov_b);
  return g;
}

Eigen::VectorXd GevObjective::grad(const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& theta) const {
  const ThetaCache& c = cache_for(theta);
  const int n = data_.n_sites();
  if (u.size() != latent_dim()) {
    throw ValidationError("grad_u: latent dimension mismatch");
  }
  Eigen::VectorXd g = Eigen::VectorXd::Zero(latent_dim());
  for (int i = 0; i < n; ++i) {
    const GevParams p = site_params(u, c.hypers, i);
    for (double y : data_.obs[i]) {
      const GevDeriv d = gev_logpdf_deriv(y, p);
      g[i] += d.da;
      if (spec_.b_random) g[n + i] += d.db;
    }
  }
  g.head(n) -= c.prec_a * u.head(n);
  if (spec_.b_random) g.tail(n) -= c.prec_b * u.tail(n);
  return g;
}

Eigen::MatrixXd GevObjective::hess(const Eigen::VectorXd& u,
                                   const Eigen::VectorXd& theta) const {
  const ThetaCache& c = cache_for(theta);
  const int n = data_.n_sites();
  const int dim = latent_dim();
  if (u.size() != dim) {
    throw ValidationError("hess_u: latent dimension mismatch");
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  h.topLeftCorner(n, n) = -c.prec_a;
  if (spec_.b_random) h.bottomRightCorner(n, n) = -c.prec_b;
  for (int i = 0; i < n; ++i) {
    const GevParams p = site_params(u, c.hypers, i);
    for (double y : data_.obs[i]) {
      const GevDeriv d = gev_logpdf_deriv(y, p);
      h(i, i) += d.daa;
      if (spec_.b_random) {
        h(n + i, n + i) += d.dbb;
        h(i, n + i) += d.dab;
        h(n + i, i) += d.dab;
      }
    }
  }
  return h;
}

Eigen::VectorXd default_theta_init(const SiteDataset& data,
                                   const ModelSpec& spec) {
  data.validate();
  ThetaLayout lay(spec);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(lay.dim);
  if (lay.s >= 0) theta[lay.s] = -2.0;

  // Median pairwise distance for length-scale initialization.
  std::vector<double> dists;
  const int n = data.n_sites();
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      dists.push_back(distance(data.coords[i], data.coords[j]));
    }
  }
  double log_lambda = 0.0;
  if (!dists.empty()) {
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                     dists.end());
    const double med = dists[dists.size() / 2];
    if (med > 0.0) log_lambda = std::log(med);
  }
  theta[lay.a_lambda] = log_lambda;
  if (lay.b_lambda >= 0) theta[lay.b_lambda] = log_lambda;

  // sigma2_a starts at the spread of the site means; sigma2_b starts small.
  // With one observation per site the GEV likelihood is unbounded along
  // a_i -> y_i, b_i -> -inf, and a weak prior on the log-scale field lets
  // the inner mode collapse onto that spike. A tight initial prior keeps
  // the first inner solve in the smooth basin; the outer optimization then
  // relaxes sigma2_b as the evidence allows.
  {
    double sum = 0.0, sum2 = 0.0;
    for (const auto& site : data.obs) {
      double m = 0.0;
      for (double y : site) m += y;
      m /= static_cast<double>(site.size());
      sum += m;
      sum2 += m * m;
    }
    const double mean = sum / n;
    const double var = n > 1 ? (sum2 - n * mean * mean) / (n - 1) : 1.0;
    theta[lay.a_sigma2] = std::log(std::max(var, 1e-2));
  }
  if (lay.b_sigma2 >= 0) theta[lay.b_sigma2] = -2.0;

  if (lay.b_fixed >= 0) {
    double sum = 0.0, sum2 = 0.0;
    int count = 0;
    for (const auto& site : data.obs) {
      for (double y : site) {
        sum += y;
        sum2 += y * y;
        ++count;
      }
    }
    const double mean = sum / count;
    const double var = count > 1 ? (sum2 - count * mean * mean) / (count - 1)
                                 : 1.0;
    theta[lay.b_fixed] = var > 0.0 ? 0.5 * std::log(var) : 0.0;
  }
  return theta;
}

}  // namespace spatgev
