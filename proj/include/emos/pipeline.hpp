#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emos/data.hpp"
#include "emos/synth.hpp"
#include "emos/verify.hpp"

namespace emos {

struct DataPaths {
  std::string forecasts;
  std::string observations;
  std::string stations;
  std::string grid;
  std::string coefficients;  // predict/verify input
};

struct PipelineResult {
  std::vector<std::string> warnings;
};

// fit: rolling coefficient chain -> <out_dir>/coefficients.csv
PipelineResult run_fit(const RunConfig& cfg, const DataPaths& paths,
                       const std::string& out_dir);

// predict: per-(day, station) distribution parameters, quantiles and
// exceedance probabilities -> <out_dir>/predictions.csv
PipelineResult run_predict(const RunConfig& cfg, const DataPaths& paths,
                           const std::string& out_dir);

// verify: scores against observations and a raw-ensemble reference ->
// <out_dir>/report.json and <out_dir>/reliability_<t>.csv.  The optional date
// range restricts the verified days (e.g. to drop burn-in).
PipelineResult run_verify(const RunConfig& cfg, const DataPaths& paths,
                          const std::string& out_dir,
                          std::optional<Date> from = {},
                          std::optional<Date> to = {});

// simulate: writes a synthetic fixture (forecasts/observations/stations/grid
// plus the generating coefficients) into out_dir.
PipelineResult run_simulate(const ScenarioSpec& spec, const std::string& out_dir);

// ---- shared assembly steps (exposed for tests and the acceptance suite) ----

// Dense per-day member fields over the grid; every (day, gridpoint) present
// in the forecast table must be complete.
struct FieldSeries {
  std::vector<Date> dates;  // ascending
  int n_points = 0;
  int n_members = 0;
  std::vector<double> values;  // [day][point][member]
  MemberField day_field(int day_index) const;
};

FieldSeries organize_field(const ForecastTable& t, const Grid& grid);

// Observation matrix aligned to (dates x stations); NaN marks missing values.
// Unknown station ids produce warnings, not errors.
std::vector<double> organize_observations(const ObservationTable& t,
                                          std::span<const Station> stations,
                                          std::span<const Date> dates,
                                          std::vector<std::string>& warnings);

// Predictor sets for every (day, site) with a valid gridpoint assignment.
// Entries for excluded sites stay empty.  radius_km == 0 selects the local
// model (no neighborhood dispersion).
struct PredictorTable {
  std::vector<PredictorSet> values;  // [day][site]
  std::vector<char> valid;           // [day][site]
  std::size_t n_sites = 0;
  const PredictorSet* at(std::size_t day, std::size_t site) const {
    return valid[day * n_sites + site] ? &values[day * n_sites + site] : nullptr;
  }
};

PredictorTable build_predictors(const FieldSeries& field, const Grid& grid,
                                std::span<const Station> stations,
                                const StationAssignment& assign,
                                const RunConfig& cfg);

// Rolling training windows, one per date, from the precomputed predictors and
// the observation matrix.
std::vector<TrainingWindow> build_windows(const FieldSeries& field,
                                          std::span<const Station> stations,
                                          const PredictorTable& predictors,
                                          std::span<const double> observations,
                                          int window_days);

}  // namespace emos
