// kernel.hpp
// Spatial covariance kernels, Cholesky-backed covariance matrices,
// multivariate Normal log-density and sampling, and GP conditional
// (kriging) prediction at new sites.

#ifndef SPATGEV_KERNEL_HPP
#define SPATGEV_KERNEL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "spatgev/errors.hpp"

namespace spatgev {

struct Coord {
  double x = 0.0;
  double y = 0.0;
};
using Coords = std::vector<Coord>;

inline double distance(const Coord& p, const Coord& q) {
  const double dx = p.x - q.x;
  const double dy = p.y - q.y;
  return std::sqrt(dx * dx + dy * dy);
}

// The model's kernel is exponential decay in Euclidean distance,
// k = sigma^2 exp(-d / lambda). The true squared-exponential
// sigma^2 exp(-d^2 / (2 lambda^2)) is available behind a flag.
enum class KernelForm { Exponential, SquaredExponential };

struct KernelConfig {
  double log_sigma2 = 0.0;
  double log_lambda = 0.0;
  // Diagonal nugget added to assembled covariance matrices. Defaults to
  // 1e-6 * sigma^2 when unset; zero is allowed.
  std::optional<double> jitter;
  KernelForm form = KernelForm::Exponential;

  double sigma2() const { return std::exp(log_sigma2); }
  double lambda() const { return std::exp(log_lambda); }
  double effective_jitter() const {
    if (jitter) {
      if (*jitter < 0.0) throw ValidationError("kernel: jitter must be >= 0");
      return *jitter;
    }
    return 1e-6 * sigma2();
  }
};

double kernel_eval(const Coord& x1, const Coord& x2, const KernelConfig& cfg);

// Cholesky factorization of K + jitter*I. Immutable after construction.
class CovMatrix {
 public:
  CovMatrix(Eigen::MatrixXd lower, double log_det)
      : lower_(std::move(lower)), log_det_(log_det) {}

  int dim() const { return static_cast<int>(lower_.rows()); }
  const Eigen::MatrixXd& lower_factor() const { return lower_; }
  double log_det() const { return log_det_; }

  // L^{-1} z.
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& z) const;
  // (L L^T)^{-1} z.
  Eigen::VectorXd solve(const Eigen::VectorXd& z) const;
  // Dense inverse (L L^T)^{-1}; used for Hessian prior blocks.
  Eigen::MatrixXd inverse() const;

 private:
  Eigen::MatrixXd lower_;
  double log_det_;
};

Eigen::MatrixXd build_kernel_matrix(const Coords& coords,
                                    const KernelConfig& cfg);

// Assemble K + jitter*I and factor it. Throws NumericError naming the
// offending leading minor if the matrix is not numerically PD.
CovMatrix build_cov(const Coords& coords, const KernelConfig& cfg);

double mvn_logpdf(const Eigen::VectorXd& z, const CovMatrix& cov);

std::vector<Eigen::VectorXd> mvn_sample(const Eigen::VectorXd& mean,
                                        const CovMatrix& cov, std::size_t n,
                                        std::uint64_t seed);

// Factors K(X, X) + jitter*I once and conditions a zero-mean GP on observed
// values at arbitrary new sites. Each new site is treated independently
// (univariate conditionals).
class GpConditioner {
 public:
  GpConditioner(const Coords& coords_obs, const KernelConfig& cfg);

  // Kriging mean and variance for every new site.
  void condition(const Eigen::VectorXd& values_obs, const Coords& coords_new,
                 Eigen::VectorXd* mean_new, Eigen::VectorXd* var_new) const;

 private:
  Coords coords_;
  KernelConfig cfg_;
  CovMatrix cov_;
};

std::pair<Eigen::VectorXd, Eigen::VectorXd> gp_condition(
    const Coords& coords_obs, const Eigen::VectorXd& values_obs,
    const Coords& coords_new, const KernelConfig& cfg);

}  // namespace spatgev

#endif  // SPATGEV_KERNEL_HPP
