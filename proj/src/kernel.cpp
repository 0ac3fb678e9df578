// kernel.cpp

#include "spatgev/kernel.hpp"

#include <cmath>

#include "spatgev/rng.hpp"

namespace spatgev {

double kernel_eval(const Coord& x1, const Coord& x2, const KernelConfig& cfg) {
  if (!std::isfinite(x1.x) || !std::isfinite(x1.y) || !std::isfinite(x2.x) ||
      !std::isfinite(x2.y)) {
    throw ValidationError("kernel_eval: coordinates must be finite");
  }
  const double d = distance(x1, x2);
  const double lam = cfg.lambda();
  if (cfg.form == KernelForm::SquaredExponential) {
    return cfg.sigma2() * std::exp(-d * d / (2.0 * lam * lam));
  }
  return cfg.sigma2() * std::exp(-d / lam);
}

Eigen::VectorXd CovMatrix::solve_lower(const Eigen::VectorXd& z) const {
  if (z.size() != lower_.rows()) {
    throw ValidationError("CovMatrix: dimension mismatch");
  }
  return lower_.triangularView<Eigen::Lower>().solve(z);
}

Eigen::VectorXd CovMatrix::solve(const Eigen::VectorXd& z) const {
  Eigen::VectorXd w = solve_lower(z);
  return lower_.transpose().triangularView<Eigen::Upper>().solve(w);
}

Eigen::MatrixXd CovMatrix::inverse() const {
  const auto n = lower_.rows();
  Eigen::MatrixXd linv = lower_.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(n, n));
  return linv.transpose() * linv;
}

Eigen::MatrixXd build_kernel_matrix(const Coords& coords,
                                    const KernelConfig& cfg) {
  const int n = static_cast<int>(coords.size());
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    k(i, i) = cfg.sigma2();
    for (int j = 0; j < i; ++j) {
      const double v = kernel_eval(coords[i], coords[j], cfg);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

namespace {

// In-place lower Cholesky that reports the first non-positive pivot.
// Returns the pivot index or -1 on success.
int cholesky_lower(Eigen::MatrixXd& m) {
  const auto n = m.rows();
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j) - m.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) {
      return static_cast<int>(j);
    }
    d = std::sqrt(d);
    m(j, j) = d;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      m(i, j) = (m(i, j) - m.row(i).head(j).dot(m.row(j).head(j))) / d;
    }
  }
  m.triangularView<Eigen::StrictlyUpper>().setZero();
  return -1;
}

}  // namespace

CovMatrix build_cov(const Coords& coords, const KernelConfig& cfg) {
  if (coords.empty()) {
    throw ValidationError("build_cov: coordinate list is empty");
  }
  Eigen::MatrixXd k = build_kernel_matrix(coords, cfg);
  k.diagonal().array() += cfg.effective_jitter();
  const int bad = cholesky_lower(k);
  if (bad >= 0) {
    throw NumericError("build_cov: covariance not positive definite (leading minor " +
                       std::to_string(bad + 1) + ")");
  }
  const double log_det = 2.0 * k.diagonal().array().log().sum();
  return CovMatrix(std::move(k), log_det);
}

double mvn_logpdf(const Eigen::VectorXd& z, const CovMatrix& cov) {
  if (z.size() != cov.dim()) {
    throw ValidationError("mvn_logpdf: dimension mismatch");
  }
  static const double log2pi = std::log(2.0 * M_PI);
  const Eigen::VectorXd w = cov.solve_lower(z);
  return -0.5 * cov.dim() * log2pi - 0.5 * cov.log_det() -
         0.5 * w.squaredNorm();
}

std::vector<Eigen::VectorXd> mvn_sample(const Eigen::VectorXd& mean,
                                        const CovMatrix& cov, std::size_t n,
                                        std::uint64_t seed) {
  if (mean.size() != cov.dim()) {
    throw ValidationError("mvn_sample: dimension mismatch");
  }
  auto rng = make_rng(seed);
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  Eigen::VectorXd z(cov.dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < cov.dim(); ++j) z[j] = standard_normal(rng);
    out.push_back(mean + cov.lower_factor() * z);
  }
  return out;
}

GpConditioner::GpConditioner(const Coords& coords_obs, const KernelConfig& cfg)
    : coords_(coords_obs), cfg_(cfg), cov_(build_cov(coords_obs, cfg)) {}

void GpConditioner::condition(const Eigen::VectorXd& values_obs,
                              const Coords& coords_new,
                              Eigen::VectorXd* mean_new,
                              Eigen::VectorXd* var_new) const {
  const int n = cov_.dim();
  if (values_obs.size() != n) {
    throw ValidationError("gp_condition: observed values size mismatch");
  }
  const int m = static_cast<int>(coords_new.size());
  Eigen::MatrixXd kx(n, m);  // cross covariances, one column per new site
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) {
      kx(i, j) = kernel_eval(coords_[i], coords_new[j], cfg_);
    }
  }
  // V = L^{-1} Kx, mean = V^T (L^{-1} a), var = sigma^2 - colwise |V|^2.
  const Eigen::MatrixXd v =
      cov_.lower_factor().triangularView<Eigen::Lower>().solve(kx);
  const Eigen::VectorXd w = cov_.solve_lower(values_obs);
  *mean_new = v.transpose() * w;
  *var_new = (cfg_.sigma2() - v.colwise().squaredNorm().transpose().array())
                 .max(0.0)
                 .matrix();
  // With zero jitter the conditional at a coincident site is a point mass
  // at the observed value; bypass the solver's round-off there.
  if (cfg_.effective_jitter() == 0.0) {
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < n; ++i) {
        if (coords_[i].x == coords_new[j].x && coords_[i].y == coords_new[j].y) {
          (*mean_new)[j] = values_obs[i];
          (*var_new)[j] = 0.0;
          break;
        }
      }
    }
  }
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> gp_condition(
    const Coords& coords_obs, const Eigen::VectorXd& values_obs,
    const Coords& coords_new, const KernelConfig& cfg) {
  GpConditioner cond(coords_obs, cfg);
  Eigen::VectorXd mean, var;
  cond.condition(values_obs, coords_new, &mean, &var);
  return {std::move(mean), std::move(var)};
}

}  // namespace spatgev
