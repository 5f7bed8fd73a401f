#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emos/dates.hpp"
#include "emos/fit.hpp"
#include "emos/predictors.hpp"

namespace emos {

// Shortest decimal representation that round-trips the exact double value;
// used by every CSV writer so that write -> load is lossless and runs are
// byte-reproducible.
std::string format_double(double v);

struct ForecastRecord {
  Date valid_time;
  std::string point_id;
  int member = 0;  // 1-based
  double value = 0.0;
};

struct ForecastTable {
  std::vector<ForecastRecord> records;
  int n_members = 0;
};

struct ObservationRecord {
  Date valid_time;
  std::string station_id;
  double value = 0.0;
};

struct ObservationTable {
  std::vector<ObservationRecord> records;
};

struct Station {
  std::string id;
  double coord_a = 0.0;
  double coord_b = 0.0;
};

// Loaders validate structure as well as content: duplicate keys, negative
// amounts, ragged member sets and unknown coordinate tags are errors, and
// parse failures name the file and line.
ForecastTable load_forecasts(const std::string& path);
ObservationTable load_observations(const std::string& path);
std::vector<Station> load_stations(const std::string& path);
Grid load_grid(const std::string& path);

void write_forecasts(const std::string& path, const ForecastTable& t);
void write_observations(const std::string& path, const ObservationTable& t);
void write_stations(const std::string& path, std::span<const Station> stations);
void write_grid(const std::string& path, const Grid& grid);

// Coefficient CSV: one row per verification day.  The beta2 column is empty
// for the local model; objective_value/n_pairs may be empty on input.
struct CoefficientRow {
  EmosCoefficients coefficients;
  double objective_value = 0.0;
  std::size_t n_pairs = 0;
};
void write_coefficients(const std::string& path, std::span<const DayFit> rows);
std::vector<CoefficientRow> load_coefficients(const std::string& path);

// Nearest-gridpoint assignment with a distance cutoff.  Excluded stations get
// index -1 and a warning naming the station and the reason; ties go to the
// lexicographically smallest gridpoint id.
struct StationAssignment {
  std::vector<int> grid_index;
  std::vector<double> dist_km;
  std::vector<std::string> warnings;
};
StationAssignment associate_stations(std::span<const Station> stations,
                                     const Grid& grid, double cutoff_km);

struct RunConfig {
  int window_days = 30;
  double radius_km = 0.0;  // 0 = local model, no neighborhood term
  bool use_climo = false;
  double trace_threshold = 0.0;
  std::vector<double> thresholds = {0.0, 5.0, 10.0, 15.0};
  int bootstrap_replicates = 1000;
  double bootstrap_level = 90.0;
  std::uint64_t seed = 20110612;
  int first_day_iterations = 10;
  int daily_iterations = 1;
  int min_window_days = 10;
  double station_cutoff_km = 10.0;
  int threads = 0;  // 0 = library default
};

// key=value file, one entry per line, '#' comments; unknown keys and
// malformed values are errors naming the line.
RunConfig load_config(const std::string& path);
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value);
std::vector<double> parse_threshold_list(const std::string& text);

}  // namespace emos
