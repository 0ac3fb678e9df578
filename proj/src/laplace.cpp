// laplace.cpp

#include "spatgev/laplace.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace spatgev::laplace {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;

// Cholesky of A + mu*I, boosting mu from mu0 by factors of 10 until the
// factorization succeeds. Returns the boost actually used.
double boosted_llt(const Eigen::MatrixXd& a, Eigen::LLT<Eigen::MatrixXd>* llt,
                   double mu0 = 1e-4, int max_boosts = 30) {
  llt->compute(a);
  if (llt->info() == Eigen::Success) return 0.0;
  double mu = mu0;
  for (int k = 0; k < max_boosts; ++k, mu *= 10.0) {
    Eigen::MatrixXd boosted = a;
    boosted.diagonal().array() += mu;
    llt->compute(boosted);
    if (llt->info() == Eigen::Success) return mu;
  }
  throw NumericError("laplace: Hessian factorization failed after boosting");
}

double llt_log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

InnerResult inner_optimize(const Objective& obj, const Eigen::VectorXd& theta,
                           const std::optional<Eigen::VectorXd>& u_init,
                           const InnerOptions& opts) {
  const int dim = obj.latent_dim();
  Eigen::VectorXd u =
      u_init ? *u_init : Eigen::VectorXd::Zero(dim).eval();
  if (u.size() != dim) {
    throw ValidationError("inner_optimize: u_init dimension mismatch");
  }
  double fval = obj.value(u, theta);
  if (!std::isfinite(fval)) {
    throw NumericError("inner_optimize: infeasible starting point");
  }

  InnerResult res;
  res.iterations = 0;
  Eigen::LLT<Eigen::MatrixXd> llt;
  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    const Eigen::VectorXd g = obj.grad(u, theta);
    if (g.lpNorm<Eigen::Infinity>() <=
        opts.grad_tol * (1.0 + std::abs(fval))) {
      res.converged = true;
      break;
    }
    if (iter == opts.max_iter) {
      throw NumericError("inner_optimize: no convergence after " +
                         std::to_string(opts.max_iter) + " iterations");
    }
    Eigen::MatrixXd neg_h = -obj.hess(u, theta);
    const double mu = boosted_llt(neg_h, &llt);
    const Eigen::VectorXd step = llt.solve(g);
    const double slope = g.dot(step);
    if (mu == 0.0 && slope <= opts.decrement_tol * (1.0 + std::abs(fval))) {
      res.converged = true;
      break;
    }

    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtrack; ++bt, alpha *= 0.5) {
      const Eigen::VectorXd trial = u + alpha * step;
      const double ftrial = obj.value(trial, theta);
      if (std::isfinite(ftrial) && ftrial >= fval + kArmijo * alpha * slope) {
        u = trial;
        fval = ftrial;
        accepted = true;
        break;
      }
    }
    ++res.iterations;
    if (!accepted) {
      throw NumericError("inner_optimize: line search failed at iteration " +
                         std::to_string(iter + 1));
    }
  }

  // -H must be PD at the mode, without any boost.
  Eigen::MatrixXd neg_h = -obj.hess(u, theta);
  llt.compute(neg_h);
  if (llt.info() != Eigen::Success) {
    throw NumericError("inner_optimize: -Hessian indefinite at the optimum");
  }
  res.u_opt = std::move(u);
  res.neg_hess_lower = llt.matrixL();
  res.neg_hess_log_det = llt_log_det(llt);
  res.g_at_opt = fval;
  return res;
}

std::pair<double, InnerResult> laplace_logml(
    const Objective& obj, const Eigen::VectorXd& theta,
    const std::optional<Eigen::VectorXd>& warm, const InnerOptions& opts) {
  InnerResult inner = inner_optimize(obj, theta, warm, opts);
  static const double log2pi = std::log(2.0 * M_PI);
  const double logml = inner.g_at_opt - 0.5 * inner.neg_hess_log_det +
                       0.5 * obj.latent_dim() * log2pi;
  return {logml, std::move(inner)};
}

Eigen::MatrixXd cross_deriv_u_theta(const Objective& obj,
                                    const Eigen::VectorXd& u,
                                    const Eigen::VectorXd& theta,
                                    double step_rel) {
  const int p = obj.theta_dim();
  Eigen::MatrixXd cross(obj.latent_dim(), p);
  for (int j = 0; j < p; ++j) {
    const double h = step_rel * (1.0 + std::abs(theta[j]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    cross.col(j) = (obj.grad(u, tp) - obj.grad(u, tm)) / (2.0 * h);
  }
  return cross;
}

Eigen::MatrixXd nearest_pd(const Eigen::MatrixXd& m, double min_eig) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd vals = eig.eigenvalues().cwiseMax(min_eig);
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

// Tracks warm starts and the evaluation budget for the outer loop.
class LogmlEvaluator {
 public:
  LogmlEvaluator(const Objective& obj, const OuterOptions& opts)
      : obj_(obj), opts_(opts) {}

  // Returns -inf when the inner solve fails so line searches can reject
  // the trial point.
  double operator()(const Eigen::VectorXd& theta, InnerResult* inner = nullptr) {
    if (++evals_ > opts_.max_evals) {
      throw NumericError("outer_optimize: evaluation cap (" +
                         std::to_string(opts_.max_evals) + ") exceeded");
    }
    try {
      auto [logml, res] = laplace_logml(obj_, theta, warm_, opts_.inner);
      warm_ = res.u_opt;
      if (inner) *inner = std::move(res);
      return logml;
    } catch (const NumericError& e) {
      if (std::getenv("SPATGEV_TRACE")) {
        std::fprintf(stderr, "[inner fail] %s at theta =", e.what());
        for (int j = 0; j < theta.size(); ++j) {
          std::fprintf(stderr, " %.6g", theta[j]);
        }
        std::fprintf(stderr, "\n");
      }
      return -kInf;
    }
  }

  int evals() const { return evals_; }
  const std::optional<Eigen::VectorXd>& warm() const { return warm_; }
  void set_warm(const Eigen::VectorXd& u) { warm_ = u; }

 private:
  const Objective& obj_;
  const OuterOptions& opts_;
  std::optional<Eigen::VectorXd> warm_;
  int evals_ = 0;
};

Eigen::VectorXd fd_gradient(LogmlEvaluator& eval, const Eigen::VectorXd& theta,
                            double step_rel) {
  Eigen::VectorXd g(theta.size());
  for (int j = 0; j < theta.size(); ++j) {
    const double h = step_rel * (1.0 + std::abs(theta[j]));
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    const double fp = eval(tp);
    const double fm = eval(tm);
    if (std::isfinite(fp) && std::isfinite(fm)) {
      g[j] = (fp - fm) / (2.0 * h);
    } else if (std::isfinite(fp) || std::isfinite(fm)) {
      // One-sided fallback when the inner solve fails on one flank.
      const double f0 = eval(theta);
      if (!std::isfinite(f0)) {
        throw NumericError("outer_optimize: objective undefined near iterate");
      }
      g[j] = std::isfinite(fp) ? (fp - f0) / h : (f0 - fm) / h;
    } else {
      throw NumericError("outer_optimize: objective undefined near iterate");
    }
  }
  return g;
}

// Negative Hessian of logml by central second differences; used for V_theta.
Eigen::MatrixXd fd_neg_hessian(LogmlEvaluator& eval,
                               const Eigen::VectorXd& theta, double f0,
                               double step_rel) {
  const int p = static_cast<int>(theta.size());
  Eigen::MatrixXd h(p, p);
  Eigen::VectorXd steps(p);
  for (int j = 0; j < p; ++j) {
    steps[j] = step_rel * (1.0 + std::abs(theta[j]));
  }
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += steps[j];
    tm[j] -= steps[j];
    h(j, j) = (eval(tp) + eval(tm) - 2.0 * f0) / (steps[j] * steps[j]);
  }
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < j; ++k) {
      Eigen::VectorXd tpp = theta, tpm = theta, tmp = theta, tmm = theta;
      tpp[j] += steps[j];
      tpp[k] += steps[k];
      tpm[j] += steps[j];
      tpm[k] -= steps[k];
      tmp[j] -= steps[j];
      tmp[k] += steps[k];
      tmm[j] -= steps[j];
      tmm[k] -= steps[k];
      const double v = (eval(tpp) - eval(tpm) - eval(tmp) + eval(tmm)) /
                       (4.0 * steps[j] * steps[k]);
      h(j, k) = v;
      h(k, j) = v;
    }
  }
  return -h;
}

}  // namespace

FitResult outer_optimize(const Objective& obj,
                         const Eigen::VectorXd& theta_init,
                         const OuterOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  const int p = obj.theta_dim();
  if (theta_init.size() != p) {
    throw ValidationError("outer_optimize: theta_init dimension mismatch");
  }

  LogmlEvaluator eval(obj, opts);
  if (opts.u_init) eval.set_warm(*opts.u_init);
  Eigen::VectorXd theta = theta_init;
  double f = eval(theta);
  if (!std::isfinite(f)) {
    throw NumericError("outer_optimize: objective undefined at theta_init");
  }
  Eigen::VectorXd g = fd_gradient(eval, theta, opts.fd_step_rel);

  // BFGS on the negated objective; b_inv approximates the inverse Hessian
  // of -logml.
  Eigen::MatrixXd b_inv = Eigen::MatrixXd::Identity(p, p);
  FitResult fit;
  fit.converged = false;
  int iterations = 0;

  while (true) {
    if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol * (1.0 + std::abs(f))) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd dir = b_inv * g;  // ascent direction
    double slope = g.dot(dir);
    if (!(slope > 0.0)) {
      b_inv.setIdentity();
      dir = g;
      slope = g.squaredNorm();
    }
    if (dir.norm() > opts.max_step) {
      dir *= opts.max_step / dir.norm();
      slope = g.dot(dir);
    }
    double alpha = 1.0;
    double fnew = -kInf;
    Eigen::VectorXd theta_new;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt, alpha *= 0.5) {
      theta_new = theta + alpha * dir;
      fnew = eval(theta_new);
      if (std::isfinite(fnew) && fnew >= f + kArmijo * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Gradient too noisy to make progress; treat the current point as
      // the optimum if the remaining gradient is small, else fail.
      if (g.lpNorm<Eigen::Infinity>() <=
          100.0 * opts.grad_tol * (1.0 + std::abs(f))) {
        fit.converged = true;
        break;
      }
      throw NumericError("outer_optimize: line search failed");
    }
    Eigen::VectorXd g_new = fd_gradient(eval, theta_new, opts.fd_step_rel);
    const Eigen::VectorXd s = theta_new - theta;
    const Eigen::VectorXd y = -(g_new - g);  // gradient change of -logml
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const Eigen::VectorXd biy = b_inv * y;
      const double yby = y.dot(biy);
      b_inv += ((sy + yby) / (sy * sy)) * (s * s.transpose()) -
               (biy * s.transpose() + s * biy.transpose()) / sy;
    }
    theta = theta_new;
    f = fnew;
    g = g_new;
    ++iterations;
  }

  // Mode quantities at theta_hat.
  InnerResult inner;
  fit.logml = eval(theta, &inner);
  if (!std::isfinite(fit.logml)) {
    throw NumericError("outer_optimize: inner solve failed at the optimum");
  }
  fit.theta_hat = theta;
  fit.u_hat = inner.u_opt;
  const int udim = obj.latent_dim();
  const Eigen::MatrixXd linv =
      inner.neg_hess_lower.triangularView<Eigen::Lower>().solve(
          Eigen::MatrixXd::Identity(udim, udim));
  fit.v_u = linv.transpose() * linv;

  // J_u via the implicit-function theorem: (-H)^{-1} d2G/(du dtheta).
  const Eigen::MatrixXd cross =
      cross_deriv_u_theta(obj, fit.u_hat, theta, opts.cross_fd_step_rel);
  fit.j_u = fit.v_u * cross;

  // V_theta from the finite-difference Hessian of the log posterior.
  Eigen::MatrixXd prec = fd_neg_hessian(eval, theta, fit.logml,
                                        opts.hess_fd_step_rel);
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) {
    prec = nearest_pd(prec);
    llt.compute(prec);
    fit.diagnostics.v_theta_projected = true;
  }
  fit.v_theta = llt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.v_theta = 0.5 * (fit.v_theta + fit.v_theta.transpose()).eval();

  fit.diagnostics.outer_iterations = iterations;
  fit.diagnostics.logml_evaluations = eval.evals();
  fit.diagnostics.final_grad_norm = g.lpNorm<Eigen::Infinity>();
  fit.diagnostics.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return fit;
}

JointNormal joint_posterior(const FitResult& fit) {
  if (!fit.converged) {
    throw ValidationError("joint_posterior: fit did not converge");
  }
  const int udim = static_cast<int>(fit.u_hat.size());
  const int p = static_cast<int>(fit.theta_hat.size());
  JointNormal joint;
  joint.u_dim = udim;
  joint.theta_dim = p;
  joint.mean.resize(udim + p);
  joint.mean << fit.u_hat, fit.theta_hat;

  const Eigen::MatrixXd jv = fit.j_u * fit.v_theta;
  joint.cov.resize(udim + p, udim + p);
  joint.cov.topLeftCorner(udim, udim) =
      fit.v_u + jv * fit.j_u.transpose();
  joint.cov.topRightCorner(udim, p) = jv;
  joint.cov.bottomLeftCorner(p, udim) = jv.transpose();
  joint.cov.bottomRightCorner(p, p) = fit.v_theta;
  joint.cov = 0.5 * (joint.cov + joint.cov.transpose()).eval();

  Eigen::LLT<Eigen::MatrixXd> llt(joint.cov);
  if (llt.info() != Eigen::Success) {
    joint.cov = nearest_pd(joint.cov);
    llt.compute(joint.cov);
    if (llt.info() != Eigen::Success) {
      throw NumericError("joint_posterior: covariance not PSD after repair");
    }
    joint.repaired = true;
  }
  joint.cov_lower = llt.matrixL();
  return joint;
}

}  // namespace spatgev::laplace
