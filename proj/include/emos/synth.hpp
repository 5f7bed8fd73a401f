#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "emos/data.hpp"
#include "emos/fit.hpp"
#include "emos/gev.hpp"
#include "emos/predictors.hpp"

namespace emos {

// Synthetic-data generator with a known truth.  The latent intensity is a
// spatially correlated log-Gaussian field (random plane-wave superposition
// with range ~ field_range_km); members apply independent multiplicative
// noise and an offset truncation at zero, so dry members are exact zeros.
// Observations are drawn from the censored GEV implied by `truth` applied to
// the *undisplaced* ensemble's predictors via the quantile function, so the
// generating distribution is known exactly.
//
// displacement_km shifts each emitted member field by a random per-(day,
// member) vector while observations stay tied to the undisplaced field: a
// controlled position error that neighborhood predictors can absorb.
// obs_noise_scale multiplies the scale-link coefficients (beta0, beta1) when
// sampling observations only.
struct ScenarioSpec {
  int n_days = 60;
  int n_sites = 100;
  int n_members = 20;
  std::uint64_t seed = 1;
  EmosCoefficients truth;  // see default_scenario_truth()
  double spacing_km = 10.0;
  double displacement_km = 0.0;
  double obs_noise_scale = 1.0;
  double field_log_mean = 0.2;
  double field_log_std = 0.8;
  double field_range_km = 40.0;
  double member_noise = 0.3;
  double dry_offset = 0.5;
  bool climo_variation = false;
  Date start_day = Date::from_ymd(2011, 6, 1);
};

EmosCoefficients default_scenario_truth();

struct Scenario {
  ForecastTable forecasts;
  ObservationTable observations;
  std::vector<Station> stations;  // co-located with gridpoints, one per site
  Grid grid;
  EmosCoefficients truth;
};

Scenario generate_scenario(const ScenarioSpec& spec);

// Randomised PIT histogram: pit = F(y) for wet observations and U * F(0) for
// dry ones.  Returns n_bins relative frequencies summing to 1.
std::vector<double> pit_histogram(std::span<const CensoredGevParams> predictions,
                                  std::span<const double> observations, int n_bins,
                                  std::uint64_t seed);

// ---- independent oracles -------------------------------------------------
// Deliberately separate implementations used to pin down the production code
// in tests: adaptive-quadrature CRPS straight from the defining integral, and
// literal double/triple sums for the dispersion statistics.

double crps_quadrature_oracle(const CensoredGevParams& p, double y);

double md_double_sum_oracle(std::span<const double> values,
                            std::span<const double> weights = {});

PredictorSet neighborhood_predictors_oracle(const MemberField& field,
                                            const NeighborhoodWeights& w,
                                            std::span<const double> climo,
                                            double center_factor,
                                            double trace_threshold);

}  // namespace emos
