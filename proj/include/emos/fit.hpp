#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emos/dates.hpp"
#include "emos/gev.hpp"
#include "emos/predictors.hpp"

namespace emos {

// Regression coefficients linking predictors to the predictive distribution:
//   m     = alpha0 + alpha1 * mean + alpha2 * zero_frac
//   sigma = beta0 + beta1 * md [+ beta2 * nbr_md]
// beta2 is present exactly for the neighborhood model variant.
struct EmosCoefficients {
  double alpha0 = 0.0, alpha1 = 1.0, alpha2 = -1.0;
  double beta0 = 0.1, beta1 = 1.0;
  std::optional<double> beta2;
  double xi = 0.0;
  Date valid_day;

  // beta0 > 0, beta1 >= 0, beta2 >= 0 when present, xi inside the shape range.
  bool admissible() const;
};

// Standard warm start for the first fitted day of a chain.
EmosCoefficients initial_coefficients(bool with_beta2);

// Applies the link functions; no admissibility check (candidates during
// optimisation may be inadmissible and are handled by the objective).
CensoredGevParams link_params(const EmosCoefficients& c, const PredictorSet& p);

// link_params for validated coefficients; throws on inadmissible input or a
// missing neighborhood predictor.
CensoredGevParams predict(const EmosCoefficients& c, const PredictorSet& p);

struct TrainingPair {
  PredictorSet predictors;
  double observation = 0.0;
};

struct TrainingWindow {
  Date verification_day;
  std::vector<Date> days;  // distinct training days, ascending
  std::vector<TrainingPair> pairs;
};

// Per-pair score kernel; out[i] is the score of pair i under c.  The _serial
// form is the reference implementation for the OpenMP version.
void crps_loss_terms(const EmosCoefficients& c, std::span<const TrainingPair> pairs,
                     std::span<double> out);
void crps_loss_terms_serial(const EmosCoefficients& c,
                            std::span<const TrainingPair> pairs,
                            std::span<double> out);

// Mean score over the window for admissible candidates; inadmissible
// candidates are charged twice the last admissible value without touching
// the data.
double objective(const EmosCoefficients& candidate, const TrainingWindow& window,
                 double last_admissible);

struct BfgsOptions {
  double armijo_c = 1e-4;
  double backtrack_shrink = 0.5;
  int max_backtracks = 20;
  double grad_step = 1.5e-8;  // ~sqrt(eps); h_i = max(grad_step, grad_step * |x_i|)
};

struct MinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;  // accepted line-search steps
};

// BFGS with backtracking Armijo line search and forward-difference gradients.
// One iteration is one accepted step plus the inverse-Hessian update; the
// result never scores worse than the start.
MinimizeResult minimize_bfgs(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> start, int max_iterations,
                             const BfgsOptions& opts = {});

struct FitConfig {
  int window_days = 30;
  int first_day_iterations = 10;
  int daily_iterations = 1;
  int min_window_days = 10;
  bool neighborhood_model = false;
};

struct DayFit {
  EmosCoefficients coefficients;
  double objective_value = 0.0;
  std::size_t n_pairs = 0;
  bool fitted = false;  // false: previous coefficients carried forward
};

// One warm-started update from the previous day's coefficients.
DayFit fit_day(const EmosCoefficients& previous, const TrainingWindow& window,
               bool is_first_day, const FitConfig& cfg);

struct RollingFit {
  std::vector<DayFit> days;
  std::vector<std::string> warnings;
};

// Chronological coefficient chain: 10-iteration burn-in on the first fittable
// day, one iteration per day afterwards; days whose window covers fewer than
// min_window_days distinct days carry the previous coefficients forward.
RollingFit rolling_fit(std::span<const TrainingWindow> windows, const FitConfig& cfg);

}  // namespace emos
