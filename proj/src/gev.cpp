#include "emos/gev.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "emos/special.hpp"

namespace emos {

namespace {

// Uncensored CDF from native parameters; assumes sigma > 0.  log1p keeps the
// exponent accurate when xi*z is small.
double raw_gev_cdf(double mu, double sigma, double xi, double y) {
  const double z = (y - mu) / sigma;
  if (xi == 0.0) return std::exp(-std::exp(-z));
  const double t = xi * z;
  if (t <= -1.0) return xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-std::log1p(t) / xi));
}

// Closed-form score for shapes away from zero.  Where a CDF value vanishes,
// the incomplete gamma term reaches its x -> infinity limit, the complete
// gamma function.
double crps_shape_nonzero(double m, double sigma, double xi, double y) {
  const double mu = mu_from_m(m, sigma, xi);
  const double p0 = raw_gev_cdf(mu, sigma, xi, 0.0);
  const double py = raw_gev_cdf(mu, sigma, xi, y);
  const double a = 1.0 - xi;
  const double gy =
      py > 0.0 ? lower_incomplete_gamma(a, -std::log(py)) : std::tgamma(a);
  const double g0 =
      p0 > 0.0 ? lower_incomplete_gamma(a, -2.0 * std::log(p0)) : std::tgamma(a);
  const double s = sigma / xi;
  const double v = (mu - y) * (1.0 - 2.0 * py) + mu * p0 * p0 -
                   2.0 * s * (1.0 - py - gy) +
                   s * (1.0 - p0 * p0 - std::exp2(xi) * g0);
  return std::max(v, 0.0);  // clip roundoff at perfect forecasts
}

}  // namespace

void GevParams::validate() const {
  if (!(sigma > 0.0)) throw std::domain_error("GevParams: sigma must be > 0");
  if (!(xi > kShapeMin && xi < kShapeMax))
    throw std::domain_error("GevParams: xi must lie in (-0.278, 1)");
}

void CensoredGevParams::validate() const {
  if (!(sigma > 0.0)) throw std::domain_error("CensoredGevParams: sigma must be > 0");
  if (!(xi > kShapeMin && xi < kShapeMax))
    throw std::domain_error("CensoredGevParams: xi must lie in (-0.278, 1)");
}

double gev_mean_factor(double xi) {
  if (xi == 0.0) return std::numbers::egamma;
  // (Gamma(1-xi) - 1) / xi without cancellation near xi = 0.
  return std::expm1(std::lgamma(1.0 - xi)) / xi;
}

double gev_cdf(const GevParams& p, double y) {
  p.validate();
  return raw_gev_cdf(p.mu, p.sigma, p.xi, y);
}

double gev_mean(const GevParams& p) {
  p.validate();
  return p.mu + p.sigma * gev_mean_factor(p.xi);
}

double mu_from_m(double m, double sigma, double xi) {
  if (!(sigma > 0.0)) throw std::domain_error("mu_from_m: sigma must be > 0");
  if (!(xi < 1.0)) throw std::domain_error("mu_from_m: mean undefined for xi >= 1");
  return m - sigma * gev_mean_factor(xi);
}

double censored_cdf(const CensoredGevParams& p, double y) {
  p.validate();
  if (y < 0.0) return 0.0;
  return raw_gev_cdf(mu_from_m(p.m, p.sigma, p.xi), p.sigma, p.xi, y);
}

double censored_quantile(const CensoredGevParams& p, double q) {
  p.validate();
  if (!(q > 0.0 && q < 1.0))
    throw std::domain_error("censored_quantile: q must lie in (0,1)");
  const double mu = mu_from_m(p.m, p.sigma, p.xi);
  if (q <= raw_gev_cdf(mu, p.sigma, p.xi, 0.0)) return 0.0;
  const double w = -std::log(q);  // > 0
  double y;
  if (p.xi == 0.0) {
    y = mu - p.sigma * std::log(w);
  } else {
    y = mu + p.sigma * std::expm1(-p.xi * std::log(w)) / p.xi;
  }
  return std::max(y, 0.0);
}

double crps_censored_gev(const CensoredGevParams& p, double y) {
  p.validate();
  if (!(y >= 0.0)) throw std::domain_error("crps_censored_gev: y must be >= 0");
  const double e = kShapeBlendHalfWidth;
  if (std::abs(p.xi) < e) {
    // Blend the band-edge scores at fixed (m, sigma); the weights reach exact
    // 0/1 at the edges, so the blend meets the direct expression there.
    const double wl = (e - p.xi) / (2.0 * e);
    const double wh = (e + p.xi) / (2.0 * e);
    return wl * crps_shape_nonzero(p.m, p.sigma, -e, y) +
           wh * crps_shape_nonzero(p.m, p.sigma, e, y);
  }
  return crps_shape_nonzero(p.m, p.sigma, p.xi, y);
}

}  // namespace emos
