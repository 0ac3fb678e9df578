// gev.cpp

#include "spatgev/gev.hpp"

#include <limits>

#include "spatgev/rng.hpp"

namespace spatgev {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_finite_y(double y) {
  if (!std::isfinite(y)) {
    throw ValidationError("gev: observation must be finite");
  }
}
}  // namespace

double gev_cdf(double y, const GevParams& p) {
  check_finite_y(y);
  const double bo = p.scale();
  const double z = (y - p.a) / bo;
  if (p.shape.is_gumbel()) {
    return std::exp(-std::exp(-z));
  }
  const double so = p.shape.value();
  const double t = 1.0 + so * z;
  if (t <= 0.0) {
    // Below the lower support bound a - b_o/s_o (s_o > 0 here).
    return so > 0.0 ? 0.0 : 1.0;
  }
  return std::exp(-std::pow(t, -1.0 / so));
}

double gev_logpdf(double y, const GevParams& p) {
  check_finite_y(y);
  const double bo = p.scale();
  const double z = (y - p.a) / bo;
  if (p.shape.is_gumbel()) {
    return -p.b - z - std::exp(-z);
  }
  const double so = p.shape.value();
  const double t = 1.0 + so * z;
  if (t <= 0.0) {
    return -kInf;
  }
  return -p.b - (1.0 + 1.0 / so) * std::log(t) - std::pow(t, -1.0 / so);
}

double gev_quantile(double prob_upper, const GevParams& p) {
  if (!(prob_upper > 0.0 && prob_upper < 1.0)) {
    throw ValidationError("gev_quantile: prob_upper must lie in (0, 1)");
  }
  const double bo = p.scale();
  const double w = -std::log(1.0 - prob_upper);  // -log F(z_p)
  if (p.shape.is_gumbel()) {
    return p.a - bo * std::log(w);
  }
  const double so = p.shape.value();
  return p.a - bo / so * (1.0 - std::pow(w, -so));
}

std::vector<double> gev_sample(const GevParams& p, std::size_t n,
                               std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(n);
  auto rng = make_rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(gev_quantile(uniform_open(rng), p));
  }
  return out;
}

GevDeriv gev_logpdf_deriv(double y, const GevParams& p) {
  check_finite_y(y);
  const double bo = p.scale();
  const double z = (y - p.a) / bo;
  GevDeriv d;
  if (p.shape.is_gumbel()) {
    const double e = std::exp(-z);
    d.da = (1.0 - e) / bo;
    d.db = -1.0 + z * (1.0 - e);
    d.daa = -e / (bo * bo);
    d.dab = (e - 1.0 - z * e) / bo;
    d.dbb = -z + z * e - z * z * e;
    return d;
  }
  const double so = p.shape.value();
  const double t = 1.0 + so * z;
  if (t <= 0.0) {
    throw NumericError("gev_logpdf_deriv: observation outside support");
  }
  // l(t) = -b - (1 + 1/s) log t - t^{-1/s}, t = 1 + s (y - a)/b_o.
  const double c = 1.0 + 1.0 / so;
  const double tp = std::pow(t, -1.0 / so);  // t^{-1/s}
  const double lp = -c / t + tp / (so * t);  // dl/dt
  const double lpp = c / (t * t) - c * tp / (so * t * t);  // d2l/dt2
  d.da = -so / bo * lp;
  d.db = -1.0 - so * z * lp;
  d.daa = (so * so) / (bo * bo) * lpp;
  d.dab = so / bo * (so * z * lpp + lp);
  d.dbb = so * z * lp + so * so * z * z * lpp;
  return d;
}

}  // namespace spatgev
