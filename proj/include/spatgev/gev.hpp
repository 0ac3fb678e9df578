// gev.hpp
// Generalized extreme value (GEV) and Gumbel distribution primitives:
// density, CDF, quantile, sampling, and the (a, b) derivatives of the log
// density needed by the latent-field optimizer.
//
// Parametrization: location a, log-scale b (scale b_o = exp(b)), and shape
// stored on the log scale with an explicit Gumbel tag since log(0) is
// undefined and several model variants fix the shape to zero exactly.

#ifndef SPATGEV_GEV_HPP
#define SPATGEV_GEV_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "spatgev/errors.hpp"

namespace spatgev {

class ShapeParam {
 public:
  static ShapeParam gumbel() { return ShapeParam(true, 0.0); }
  static ShapeParam log_shape(double s) {
    if (!std::isfinite(s)) {
      throw ValidationError("ShapeParam: log shape must be finite");
    }
    return ShapeParam(false, s);
  }

  bool is_gumbel() const { return gumbel_; }
  // log(s_o); only meaningful when not Gumbel.
  double log_value() const {
    if (gumbel_) {
      throw ValidationError("ShapeParam: Gumbel shape has no log value");
    }
    return log_shape_;
  }
  // s_o itself: exp(s) when tagged, 0 for Gumbel.
  double value() const { return gumbel_ ? 0.0 : std::exp(log_shape_); }

 private:
  ShapeParam(bool gumbel, double s) : gumbel_(gumbel), log_shape_(s) {}
  bool gumbel_;
  double log_shape_;
};

struct GevParams {
  double a;          // location, data units
  double b;          // log of the scale b_o
  ShapeParam shape;

  GevParams(double a_, double b_, ShapeParam shape_)
      : a(a_), b(b_), shape(shape_) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
      throw ValidationError("GevParams: location and log-scale must be finite");
    }
  }

  double scale() const { return std::exp(b); }
};

// F(y | a, b_o, s_o). Out-of-support y with positive shape returns the
// saturated value 0 rather than an error.
double gev_cdf(double y, const GevParams& p);

// Log density. Outside the support returns -infinity (a sentinel the
// optimizers can backtrack from), while non-finite y is a validation error.
double gev_logpdf(double y, const GevParams& p);

// Upper quantile: the value exceeded with probability prob_upper, i.e.
// F(z) = 1 - prob_upper. Closed form in both branches.
double gev_quantile(double prob_upper, const GevParams& p);

// i.i.d. draws by inverse-CDF sampling; deterministic given the seed.
std::vector<double> gev_sample(const GevParams& p, std::size_t n,
                               std::uint64_t seed);

// First and second derivatives of gev_logpdf with respect to (a, b) at
// fixed y. Requires y strictly inside the support.
struct GevDeriv {
  double da = 0.0, db = 0.0;
  double daa = 0.0, dab = 0.0, dbb = 0.0;
};
GevDeriv gev_logpdf_deriv(double y, const GevParams& p);

}  // namespace spatgev

#endif  // SPATGEV_GEV_HPP
