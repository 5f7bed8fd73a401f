#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emos/dates.hpp"

namespace emos {

enum class CoordSystem { LonLat, XyKm };

// Great-circle distance for LonLat coordinates (a = lon deg, b = lat deg),
// Euclidean distance for XyKm.
double distance_km(CoordSystem cs, double a1, double b1, double a2, double b2);

struct GridPoint {
  std::string id;
  double coord_a = 0.0;        // lon or x [km]
  double coord_b = 0.0;        // lat or y [km]
  double climo_factor = 1.0;   // > 0
};

struct Grid {
  CoordSystem coord_system = CoordSystem::XyKm;
  std::vector<GridPoint> points;
  bool has_climo = false;

  // Index of a gridpoint id, -1 when absent.
  int index_of(std::string_view id) const;
};

struct EnsembleForecast {
  std::string site_id;
  Date valid_time;
  std::vector<double> members;
};

// Per-site regression inputs.  nbr_md is present exactly when the set was
// computed from a neighborhood.
struct PredictorSet {
  double mean = 0.0;
  double zero_frac = 0.0;
  double md = 0.0;                 // ensemble mean absolute difference
  std::optional<double> nbr_md;    // spatially averaged member dispersion
};

// Normalised quadratic distance taper over gridpoints strictly inside the
// radius: w ~ 1 - (d/r)^2.
struct NeighborhoodWeights {
  std::string center_id;
  double radius_km = 0.0;
  std::vector<int> point_index;
  std::vector<double> weight;  // sums to 1
  std::size_t size() const { return point_index.size(); }
};

// One day's forecasts on the full grid, point-major: values[p * n_members + k].
struct MemberField {
  std::span<const double> values;
  int n_points = 0;
  int n_members = 0;
  double value(int point, int k) const {
    return values[static_cast<std::size_t>(point) * n_members + k];
  }
};

double ensemble_mean(const EnsembleForecast& f);
double zero_fraction(const EnsembleForecast& f, double trace_threshold);

// Mean absolute difference (Gini-style, including self-pairs in the
// normalisation): sum_{x,x'} w_x w_x' |v_x - v_x'|.  Empty weights mean
// equal weighting.  O(n log n) via the sorted cumulative-weight identity.
double gini_md(std::span<const double> values, std::span<const double> weights = {});

// mean / zero_frac / md of a single ensemble; nbr_md is left unset.
PredictorSet local_predictors(const EnsembleForecast& f, double trace_threshold);

NeighborhoodWeights neighborhood_weights(const Grid& grid, double center_a,
                                         double center_b, double radius_km,
                                         std::string center_id = {});

// Weighted spatial average of member k over the neighborhood.
double weighted_member_average(const MemberField& field, const NeighborhoodWeights& w,
                               int k);

// Neighborhood predictor set.  When climo is non-empty (one factor per
// gridpoint), member values are standardised by their gridpoint factor before
// averaging and results are rescaled by center_factor; the zero fraction is
// always computed on raw values.
PredictorSet neighborhood_predictors(const MemberField& field,
                                     const NeighborhoodWeights& w,
                                     std::span<const double> climo,
                                     double center_factor, double trace_threshold);

// Batched variants over many sites for one day's field; the _serial forms are
// the reference implementations the parallel kernels are checked against.
void local_predictor_batch(const MemberField& field, std::span<const int> site_point,
                           double trace_threshold, std::span<PredictorSet> out);
void local_predictor_batch_serial(const MemberField& field,
                                  std::span<const int> site_point,
                                  double trace_threshold, std::span<PredictorSet> out);
void neighborhood_predictor_batch(const MemberField& field,
                                  std::span<const NeighborhoodWeights> site_weights,
                                  std::span<const double> climo,
                                  std::span<const double> center_factor,
                                  double trace_threshold, std::span<PredictorSet> out);
void neighborhood_predictor_batch_serial(const MemberField& field,
                                         std::span<const NeighborhoodWeights> site_weights,
                                         std::span<const double> climo,
                                         std::span<const double> center_factor,
                                         double trace_threshold,
                                         std::span<PredictorSet> out);

}  // namespace emos
