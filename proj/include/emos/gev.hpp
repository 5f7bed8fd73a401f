#pragma once

namespace emos {

// Admissible shape range for predictive distributions.  The lower bound keeps
// the closed-form score usable (it needs xi > -1 with margin); the upper
// bound keeps the mean finite.
inline constexpr double kShapeMin = -0.278;
inline constexpr double kShapeMax = 1.0;

// Half-width of the shape interval around zero inside which the score is
// evaluated by linear interpolation between the two band edges instead of
// through the 1/xi expressions, which lose precision there.
inline constexpr double kShapeBlendHalfWidth = 0.01;

// Native GEV parameters (location/scale/shape).
struct GevParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
  void validate() const;  // throws std::domain_error
};

// GEV parameterised by its mean m instead of the location mu, left-censored
// at zero.  This is the canonical predictive form: the fitted regression
// targets the mean, and mu is derived on demand.
struct CensoredGevParams {
  double m = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
  void validate() const;  // throws std::domain_error
};

// ((Gamma(1 - xi) - 1) / xi, continuously extended to the Euler-Mascheroni
// constant at xi = 0.  mean = mu + sigma * factor.
double gev_mean_factor(double xi);

double gev_cdf(const GevParams& p, double y);
double gev_mean(const GevParams& p);

// Inverts the mean relation; requires sigma > 0 and xi < 1.
double mu_from_m(double m, double sigma, double xi);

// Censored CDF: 0 below zero, jumps to the uncensored CDF at zero.
double censored_cdf(const CensoredGevParams& p, double y);

// Quantile of the censored distribution, q in (0,1).  Returns 0 whenever q
// falls inside the point mass at zero.
double censored_quantile(const CensoredGevParams& p, double q);

// Continuous ranked probability score of the censored GEV against a
// non-negative observation, in closed form.  Inside |xi| < kShapeBlendHalfWidth
// the value is interpolated linearly between the band edges at fixed (m, sigma).
double crps_censored_gev(const CensoredGevParams& p, double y);

}  // namespace emos
