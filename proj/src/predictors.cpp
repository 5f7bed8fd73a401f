#include "emos/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace emos {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;

void check_field(const MemberField& field) {
  if (field.n_points <= 0 || field.n_members <= 0)
    throw std::invalid_argument("MemberField: empty field");
  if (field.values.size() !=
      static_cast<std::size_t>(field.n_points) * field.n_members)
    throw std::invalid_argument("MemberField: value buffer size mismatch");
}

void check_weights(const MemberField& field, const NeighborhoodWeights& w) {
  if (w.point_index.empty())
    throw std::invalid_argument("NeighborhoodWeights: empty neighborhood");
  if (w.point_index.size() != w.weight.size())
    throw std::invalid_argument("NeighborhoodWeights: index/weight size mismatch");
  double total = 0.0;
  for (double x : w.weight) {
    if (!(x >= 0.0)) throw std::domain_error("NeighborhoodWeights: negative weight");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::domain_error("NeighborhoodWeights: weights must sum to 1");
  for (int idx : w.point_index)
    if (idx < 0 || idx >= field.n_points)
      throw std::runtime_error("neighborhood references gridpoint " +
                               std::to_string(idx) + " missing from the field");
}

// The parallel kernels must not let exceptions escape an OpenMP region, so
// anything neighborhood_core could object to is validated up front.
void check_climo(const MemberField& field, std::span<const double> climo,
                 std::span<const double> center_factor) {
  if (climo.empty()) return;
  if (climo.size() != static_cast<std::size_t>(field.n_points))
    throw std::invalid_argument("climo factor count must match the gridpoint count");
  for (double c : climo)
    if (!(c > 0.0)) throw std::runtime_error("climatological factors must be > 0");
  for (double c : center_factor)
    if (!(c > 0.0))
      throw std::runtime_error("climatological factor must be > 0 at the center");
}

// Shared core so the batch kernels and the single-site entry point cannot
// drift apart.  Scratch buffers are caller-provided to keep the hot loop
// allocation-free.
PredictorSet neighborhood_core(const MemberField& field, const NeighborhoodWeights& w,
                               std::span<const double> climo, double center_factor,
                               double trace_threshold, std::vector<double>& favg,
                               std::vector<double>& member_vals) {
  const int K = field.n_members;
  const std::size_t N = w.size();
  const bool standardized = !climo.empty();
  if (standardized && !(center_factor > 0.0))
    throw std::runtime_error("climatological factor must be > 0 at the center");

  favg.assign(K, 0.0);
  member_vals.resize(N);
  double zero_frac = 0.0;
  double nbr_md_sum = 0.0;
  for (int k = 0; k < K; ++k) {
    double avg = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      const int x = w.point_index[j];
      const double raw = field.value(x, k);
      double v = raw;
      if (standardized) {
        if (!(climo[x] > 0.0))
          throw std::runtime_error("climatological factor must be > 0 at gridpoint " +
                                   std::to_string(x));
        v = raw / climo[x];
      }
      avg += w.weight[j] * v;
      if (raw <= trace_threshold) zero_frac += w.weight[j];
      member_vals[j] = v;
    }
    favg[k] = avg;
    nbr_md_sum += gini_md(member_vals, w.weight);
  }
  double mean = 0.0;
  for (double v : favg) mean += v;
  mean /= K;

  PredictorSet out;
  const double scale = standardized ? center_factor : 1.0;
  out.mean = scale * mean;
  out.zero_frac = std::clamp(zero_frac / K, 0.0, 1.0);
  out.md = scale * gini_md(favg);
  out.nbr_md = scale * (nbr_md_sum / K);
  return out;
}

PredictorSet local_from_row(std::span<const double> members, double trace_threshold) {
  if (members.empty()) throw std::domain_error("local predictors: empty ensemble");
  double mean = 0.0;
  double zeros = 0.0;
  for (double v : members) {
    mean += v;
    if (v <= trace_threshold) zeros += 1.0;
  }
  PredictorSet out;
  out.mean = mean / static_cast<double>(members.size());
  out.zero_frac = zeros / static_cast<double>(members.size());
  out.md = gini_md(members);
  return out;
}

}  // namespace

double distance_km(CoordSystem cs, double a1, double b1, double a2, double b2) {
  if (cs == CoordSystem::XyKm) return std::hypot(a2 - a1, b2 - b1);
  const double deg = std::numbers::pi / 180.0;
  const double dlat = (b2 - b1) * deg;
  const double dlon = (a2 - a1) * deg;
  const double sl = std::sin(0.5 * dlat);
  const double so = std::sin(0.5 * dlon);
  const double h = sl * sl + std::cos(b1 * deg) * std::cos(b2 * deg) * so * so;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

int Grid::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < points.size(); ++i)
    if (points[i].id == id) return static_cast<int>(i);
  return -1;
}

double ensemble_mean(const EnsembleForecast& f) {
  if (f.members.empty()) throw std::domain_error("ensemble_mean: empty ensemble");
  double s = 0.0;
  for (double v : f.members) s += v;
  return s / static_cast<double>(f.members.size());
}

double zero_fraction(const EnsembleForecast& f, double trace_threshold) {
  if (f.members.empty()) throw std::domain_error("zero_fraction: empty ensemble");
  double z = 0.0;
  for (double v : f.members)
    if (v <= trace_threshold) z += 1.0;
  return z / static_cast<double>(f.members.size());
}

double gini_md(std::span<const double> values, std::span<const double> weights) {
  const std::size_t n = values.size();
  if (n == 0) throw std::domain_error("gini_md: empty sample");
  if (n == 1) return 0.0;

  // sum_{x,x'} w_x w_x' |v_x - v_x'| = 2 sum_i W_i (1 - W_i) (v_(i+1) - v_(i))
  // with W_i the cumulative weight of the i smallest values.
  if (weights.empty()) {
    thread_local std::vector<double> sorted;
    sorted.assign(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double inv_n = 1.0 / static_cast<double>(n);
    double md = 0.0;
    for (std::size_t i = 1; i < n; ++i) {
      const double cw = static_cast<double>(i) * inv_n;
      md += 2.0 * cw * (1.0 - cw) * (sorted[i] - sorted[i - 1]);
    }
    return md;
  }

  if (weights.size() != n)
    throw std::invalid_argument("gini_md: weights size mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::domain_error("gini_md: weights must be >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw std::domain_error("gini_md: weights must sum to 1");

  thread_local std::vector<std::pair<double, double>> sorted;
  sorted.resize(n);
  for (std::size_t i = 0; i < n; ++i) sorted[i] = {values[i], weights[i]};
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double cw = 0.0;
  double md = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    cw += sorted[i - 1].second;
    md += 2.0 * cw * (1.0 - cw) * (sorted[i].first - sorted[i - 1].first);
  }
  return md;
}

PredictorSet local_predictors(const EnsembleForecast& f, double trace_threshold) {
  return local_from_row(f.members, trace_threshold);
}

NeighborhoodWeights neighborhood_weights(const Grid& grid, double center_a,
                                         double center_b, double radius_km,
                                         std::string center_id) {
  if (!(radius_km > 0.0))
    throw std::domain_error("neighborhood_weights: radius must be > 0");
  NeighborhoodWeights out;
  out.center_id = std::move(center_id);
  out.radius_km = radius_km;
  double total = 0.0;
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    const GridPoint& p = grid.points[i];
    const double d =
        distance_km(grid.coord_system, center_a, center_b, p.coord_a, p.coord_b);
    if (d < radius_km) {
      const double w = 1.0 - (d / radius_km) * (d / radius_km);
      out.point_index.push_back(static_cast<int>(i));
      out.weight.push_back(w);
      total += w;
    }
  }
  if (out.point_index.empty())
    throw std::runtime_error("no gridpoint within " + std::to_string(radius_km) +
                             " km of " + out.center_id);
  for (double& w : out.weight) w /= total;
  return out;
}

double weighted_member_average(const MemberField& field, const NeighborhoodWeights& w,
                               int k) {
  check_field(field);
  check_weights(field, w);
  if (k < 0 || k >= field.n_members)
    throw std::invalid_argument("weighted_member_average: member index out of range");
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j)
    s += w.weight[j] * field.value(w.point_index[j], k);
  return s;
}

PredictorSet neighborhood_predictors(const MemberField& field,
                                     const NeighborhoodWeights& w,
                                     std::span<const double> climo,
                                     double center_factor, double trace_threshold) {
  check_field(field);
  check_weights(field, w);
  if (!climo.empty() && climo.size() != static_cast<std::size_t>(field.n_points))
    throw std::invalid_argument("neighborhood_predictors: climo size mismatch");
  thread_local std::vector<double> favg, member_vals;
  return neighborhood_core(field, w, climo, center_factor, trace_threshold, favg,
                           member_vals);
}

void local_predictor_batch_serial(const MemberField& field,
                                  std::span<const int> site_point,
                                  double trace_threshold, std::span<PredictorSet> out) {
  check_field(field);
  if (out.size() != site_point.size())
    throw std::invalid_argument("local_predictor_batch: output size mismatch");
  const std::size_t K = static_cast<std::size_t>(field.n_members);
  for (std::size_t i = 0; i < site_point.size(); ++i) {
    const int p = site_point[i];
    if (p < 0 || p >= field.n_points)
      throw std::runtime_error("site references gridpoint missing from the field");
    out[i] = local_from_row(field.values.subspan(p * K, K), trace_threshold);
  }
}

void local_predictor_batch(const MemberField& field, std::span<const int> site_point,
                           double trace_threshold, std::span<PredictorSet> out) {
#ifdef _OPENMP
  check_field(field);
  if (out.size() != site_point.size())
    throw std::invalid_argument("local_predictor_batch: output size mismatch");
  const std::size_t K = static_cast<std::size_t>(field.n_members);
  const std::int64_t n = static_cast<std::int64_t>(site_point.size());
  for (std::int64_t i = 0; i < n; ++i)
    if (site_point[i] < 0 || site_point[i] >= field.n_points)
      throw std::runtime_error("site references gridpoint missing from the field");
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] =
          local_from_row(field.values.subspan(site_point[i] * K, K), trace_threshold);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  local_predictor_batch_serial(field, site_point, trace_threshold, out);
#endif
}

void neighborhood_predictor_batch_serial(const MemberField& field,
                                         std::span<const NeighborhoodWeights> site_weights,
                                         std::span<const double> climo,
                                         std::span<const double> center_factor,
                                         double trace_threshold,
                                         std::span<PredictorSet> out) {
  check_field(field);
  if (out.size() != site_weights.size())
    throw std::invalid_argument("neighborhood_predictor_batch: output size mismatch");
  if (!climo.empty() && center_factor.size() != site_weights.size())
    throw std::invalid_argument("neighborhood_predictor_batch: center factor size mismatch");
  check_climo(field, climo, center_factor);
  std::vector<double> favg, member_vals;
  for (std::size_t i = 0; i < site_weights.size(); ++i) {
    check_weights(field, site_weights[i]);
    const double cf = climo.empty() ? 1.0 : center_factor[i];
    out[i] = neighborhood_core(field, site_weights[i], climo, cf, trace_threshold,
                               favg, member_vals);
  }
}

void neighborhood_predictor_batch(const MemberField& field,
                                  std::span<const NeighborhoodWeights> site_weights,
                                  std::span<const double> climo,
                                  std::span<const double> center_factor,
                                  double trace_threshold, std::span<PredictorSet> out) {
#ifdef _OPENMP
  check_field(field);
  if (out.size() != site_weights.size())
    throw std::invalid_argument("neighborhood_predictor_batch: output size mismatch");
  if (!climo.empty() && center_factor.size() != site_weights.size())
    throw std::invalid_argument("neighborhood_predictor_batch: center factor size mismatch");
  check_climo(field, climo, center_factor);
  const std::int64_t n = static_cast<std::int64_t>(site_weights.size());
  for (std::int64_t i = 0; i < n; ++i) check_weights(field, site_weights[i]);
  std::exception_ptr err = nullptr;
#pragma omp parallel
  {
    std::vector<double> favg, member_vals;
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const double cf = climo.empty() ? 1.0 : center_factor[i];
      try {
        out[i] = neighborhood_core(field, site_weights[i], climo, cf, trace_threshold,
                                   favg, member_vals);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
#else
  neighborhood_predictor_batch_serial(field, site_weights, climo, center_factor,
                                      trace_threshold, out);
#endif
}

}  // namespace emos
