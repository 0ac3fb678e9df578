// model.hpp
// The hierarchical GEV-GP model: dataset container, model variants,
// hyperparameter vector layout, and the joint log-density G(u; theta)
// with analytic gradient and Hessian in the latent field.

#ifndef SPATGEV_MODEL_HPP
#define SPATGEV_MODEL_HPP

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spatgev/gev.hpp"
#include "spatgev/kernel.hpp"
#include "spatgev/laplace.hpp"

namespace spatgev {

enum class Transform { None, Log };

struct SiteDataset {
  Coords coords;
  std::vector<std::vector<double>> obs;  // ragged, n_i >= 1 per site
  Transform transform = Transform::None;

  int n_sites() const { return static_cast<int>(coords.size()); }
  int n_obs_total() const;
  void validate() const;
};

// Applies the log transform to all observations and tags the dataset.
// Raw values must be strictly positive.
SiteDataset log_transform(const SiteDataset& data);

// Model variants: which GEV parameters are spatial random effects, whether
// the shape is estimated or pinned to the Gumbel case, and the data
// transform applied at ingestion.
struct ModelSpec {
  bool b_random = true;
  enum class Shape { EstimatedPositive, FixedZero };
  Shape shape = Shape::FixedZero;
  Transform transform = Transform::None;

  static ModelSpec m1() { return {true, Shape::EstimatedPositive, Transform::None}; }
  static ModelSpec m2() { return {true, Shape::FixedZero, Transform::None}; }
  static ModelSpec m3() { return {true, Shape::FixedZero, Transform::Log}; }
  static ModelSpec m4() { return {false, Shape::FixedZero, Transform::None}; }

  static ModelSpec from_name(const std::string& name);
  std::string name() const;
};

// Kernel settings that stay fixed during a fit (not part of theta).
struct KernelSettings {
  std::optional<double> jitter;
  KernelForm form = KernelForm::Exponential;
};

// Fixed effects and hyperparameters. Exactly one of kernel_b / b_fixed is
// present: kernel_b when b is a spatial random effect, b_fixed otherwise.
struct Hypers {
  ShapeParam shape = ShapeParam::gumbel();
  KernelConfig kernel_a;
  std::optional<KernelConfig> kernel_b;
  std::optional<double> b_fixed;

  void validate() const;
};

// Index map of the flattened theta vector:
//   (s, log sigma_a^2, log lambda_a, log sigma_b^2, log lambda_b) with b
//   random, (s, log sigma_a^2, log lambda_a, b) with b fixed; Gumbel
//   variants drop s. Absent coordinates are -1.
struct ThetaLayout {
  explicit ThetaLayout(const ModelSpec& spec);
  int s = -1;
  int a_sigma2 = -1;
  int a_lambda = -1;
  int b_sigma2 = -1;
  int b_lambda = -1;
  int b_fixed = -1;
  int dim = 0;
};

Eigen::VectorXd flatten_theta(const Hypers& h, const ModelSpec& spec);
Hypers unflatten_theta(const Eigen::VectorXd& theta, const ModelSpec& spec,
                       const KernelSettings& settings);

// Latent random effects u = (a, b), stacked in that fixed order; with b
// fixed the stacked dimension is n rather than 2n.
struct LatentField {
  Eigen::VectorXd a_vals;
  std::optional<Eigen::VectorXd> b_vals;

  Eigen::VectorXd stacked() const;
  static LatentField from_stacked(const Eigen::VectorXd& u, int n_sites,
                                  bool b_random);
};

// G(u; theta) for the GEV-GP model, implementing the generic Laplace
// objective. Covariance factorizations are cached per theta.
class GevObjective final : public laplace::Objective {
 public:
  GevObjective(SiteDataset data, ModelSpec spec, KernelSettings settings = {});

  int latent_dim() const override;
  int theta_dim() const override { return layout_.dim; }
  double value(const Eigen::VectorXd& u,
               const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd grad(const Eigen::VectorXd& u,
                       const Eigen::VectorXd& theta) const override;
  Eigen::MatrixXd hess(const Eigen::VectorXd& u,
                       const Eigen::VectorXd& theta) const override;

  const SiteDataset& data() const { return data_; }
  const ModelSpec& spec() const { return spec_; }
  const KernelSettings& settings() const { return settings_; }
  const ThetaLayout& layout() const { return layout_; }

 private:
  struct ThetaCache;
  const ThetaCache& cache_for(const Eigen::VectorXd& theta) const;
  GevParams site_params(const Eigen::VectorXd& u, const Hypers& h,
                        int site) const;

  SiteDataset data_;
  ModelSpec spec_;
  KernelSettings settings_;
  ThetaLayout layout_;
  mutable std::shared_ptr<ThetaCache> cache_;
};

// Default starting point for the outer optimization: s = -2, unit
// amplitudes, length-scales at the median pairwise distance, b_fixed at
// the log sample standard deviation of the observations.
Eigen::VectorXd default_theta_init(const SiteDataset& data,
                                   const ModelSpec& spec);

}  // namespace spatgev

#endif  // SPATGEV_MODEL_HPP
