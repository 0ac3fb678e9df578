// laplace.hpp
// Nested Laplace engine: inner Newton optimization of the latent field,
// Laplace marginal log-likelihood, quasi-Newton outer optimization of the
// hyperparameters, and the joint Normal posterior of (u, theta).
//
// The engine is written against an abstract objective so that test code
// can drive it with surrogate models (e.g. a conjugate linear-Gaussian
// layer, for which the Laplace approximation is exact).

#ifndef SPATGEV_LAPLACE_HPP
#define SPATGEV_LAPLACE_HPP

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "spatgev/errors.hpp"

namespace spatgev::laplace {

// G(u; theta): joint log-density of data and latent field, with analytic
// derivatives in u. value() returns -infinity for latent states outside
// the likelihood's support; grad/hess may throw NumericError there.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual int latent_dim() const = 0;
  virtual int theta_dim() const = 0;
  virtual double value(const Eigen::VectorXd& u,
                       const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::VectorXd grad(const Eigen::VectorXd& u,
                               const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::MatrixXd hess(const Eigen::VectorXd& u,
                               const Eigen::VectorXd& theta) const = 0;
};

struct InnerOptions {
  double grad_tol = 1e-8;  // converged when |grad|_inf <= grad_tol*(1+|G|)
  // Secondary stop on the Newton decrement g'(-H)^{-1}g. Near a spike of
  // the likelihood the curvature can reach ~1e15 and the gradient can no
  // longer be resolved in double precision even though the step is zero
  // to machine accuracy.
  double decrement_tol = 1e-12;
  int max_iter = 100;
  int max_backtrack = 40;
};

struct InnerResult {
  Eigen::VectorXd u_opt;
  Eigen::MatrixXd neg_hess_lower;  // Cholesky factor of -H at the mode
  double neg_hess_log_det = 0.0;
  double g_at_opt = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Damped Newton with Armijo backtracking maximizing G(.; theta). Far from
// the mode an indefinite -H is handled by a Levenberg-style diagonal boost.
InnerResult inner_optimize(const Objective& obj, const Eigen::VectorXd& theta,
                           const std::optional<Eigen::VectorXd>& u_init = {},
                           const InnerOptions& opts = {});

// Laplace marginal log-likelihood
//   G(u_theta; theta) - 0.5 log|-H| + (dim(u)/2) log(2 pi),
// exact (not merely proportional) for Gaussian models.
std::pair<double, InnerResult> laplace_logml(
    const Objective& obj, const Eigen::VectorXd& theta,
    const std::optional<Eigen::VectorXd>& warm = {},
    const InnerOptions& opts = {});

struct OuterOptions {
  double grad_tol = 1e-5;       // |grad logml|_inf <= grad_tol*(1+|logml|)
  int max_evals = 500;          // cap on logml evaluations
  double fd_step_rel = 1e-5;    // outer gradient step: h = rel*(1+|theta_j|)
  double hess_fd_step_rel = 1e-3;  // V_theta Hessian step
  double cross_fd_step_rel = 1e-4;  // d2G/du dtheta step
  // Cap on the step-direction norm per outer iteration. Finite-difference
  // gradients can be large early on and an uncapped quasi-Newton step then
  // jumps into regions where the inner solve degenerates.
  double max_step = 2.0;
  InnerOptions inner;
  // Warm start for the very first inner solve; later solves reuse the
  // previous optimum.
  std::optional<Eigen::VectorXd> u_init;
};

struct FitDiagnostics {
  int outer_iterations = 0;
  int logml_evaluations = 0;
  double final_grad_norm = 0.0;
  bool v_theta_projected = false;  // nearest-PD fallback applied
  double wall_seconds = 0.0;
};

struct FitResult {
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd v_theta;  // posterior covariance of theta
  Eigen::VectorXd u_hat;    // latent mode at theta_hat
  Eigen::MatrixXd v_u;      // (-H)^{-1} at the mode
  Eigen::MatrixXd j_u;      // d u_theta / d theta at theta_hat
  double logml = 0.0;
  bool converged = false;
  FitDiagnostics diagnostics;
};

// Quasi-Newton (BFGS) maximization of laplace_logml with finite-difference
// gradients and warm-started inner solves. On convergence computes
// V_theta, V_u, and J_u = (-H)^{-1} d2G/(du dtheta).
FitResult outer_optimize(const Objective& obj,
                         const Eigen::VectorXd& theta_init,
                         const OuterOptions& opts = {});

// d2G/(du dtheta^T) at (u, theta) by central differences of the analytic
// u-gradient; one column per theta coordinate.
Eigen::MatrixXd cross_deriv_u_theta(const Objective& obj,
                                    const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& theta,
                                    double step_rel = 1e-4);

// Symmetric projection onto matrices with eigenvalues >= min_eig.
Eigen::MatrixXd nearest_pd(const Eigen::MatrixXd& m, double min_eig = 1e-8);

struct JointNormal {
  Eigen::VectorXd mean;        // stacked (u, theta)
  Eigen::MatrixXd cov;
  Eigen::MatrixXd cov_lower;   // Cholesky factor, after PD repair if needed
  bool repaired = false;
  int u_dim = 0;
  int theta_dim = 0;
};

// Joint Normal posterior of (u, theta):
//   cov = [[V_u + J V_th J^T, J V_th], [V_th J^T, V_th]].
JointNormal joint_posterior(const FitResult& fit);

}  // namespace spatgev::laplace

#endif  // SPATGEV_LAPLACE_HPP
