#include "emos/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

#include "emos/parallel.hpp"

namespace emos {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir);
}

// json value helper: NaN becomes null in the emitted report.
nlohmann::ordered_json interval_json(const IntervalEstimate& e) {
  return {{"value", e.value}, {"ci_low", e.ci_low}, {"ci_high", e.ci_high}};
}

struct LoadedInputs {
  ForecastTable forecasts;
  ObservationTable observations;
  std::vector<Station> stations;
  Grid grid;
  StationAssignment assignment;
  FieldSeries field;
};

LoadedInputs load_inputs(const RunConfig& cfg, const DataPaths& paths,
                         bool need_observations, std::vector<std::string>& warnings) {
  LoadedInputs in;
  in.forecasts = load_forecasts(paths.forecasts);
  if (need_observations) in.observations = load_observations(paths.observations);
  in.stations = load_stations(paths.stations);
  in.grid = load_grid(paths.grid);
  if (cfg.use_climo && !in.grid.has_climo)
    throw std::runtime_error(
        "use_climo is set but the grid file has no climo_factor column");
  in.assignment = associate_stations(in.stations, in.grid, cfg.station_cutoff_km);
  warnings.insert(warnings.end(), in.assignment.warnings.begin(),
                  in.assignment.warnings.end());
  in.field = organize_field(in.forecasts, in.grid);
  return in;
}

std::string threshold_label(double t) { return format_double(t); }

}  // namespace

MemberField FieldSeries::day_field(int day_index) const {
  MemberField f;
  const std::size_t stride =
      static_cast<std::size_t>(n_points) * static_cast<std::size_t>(n_members);
  f.values = std::span(values).subspan(static_cast<std::size_t>(day_index) * stride,
                                       stride);
  f.n_points = n_points;
  f.n_members = n_members;
  return f;
}

FieldSeries organize_field(const ForecastTable& t, const Grid& grid) {
  if (t.records.empty()) throw std::runtime_error("organize_field: no forecasts");
  FieldSeries fs;
  fs.n_points = static_cast<int>(grid.points.size());
  fs.n_members = t.n_members;

  std::unordered_map<std::string, int> point_index;
  point_index.reserve(grid.points.size());
  for (std::size_t i = 0; i < grid.points.size(); ++i)
    point_index.emplace(grid.points[i].id, static_cast<int>(i));

  std::vector<Date> dates;
  for (const ForecastRecord& r : t.records) dates.push_back(r.valid_time);
  std::sort(dates.begin(), dates.end());
  dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
  fs.dates = dates;

  const std::size_t stride =
      static_cast<std::size_t>(fs.n_points) * static_cast<std::size_t>(fs.n_members);
  fs.values.assign(dates.size() * stride, kNaN);
  for (const ForecastRecord& r : t.records) {
    const auto pit = point_index.find(r.point_id);
    if (pit == point_index.end())
      throw std::runtime_error("forecast references unknown gridpoint " + r.point_id);
    const auto dit = std::lower_bound(dates.begin(), dates.end(), r.valid_time);
    const std::size_t d = static_cast<std::size_t>(dit - dates.begin());
    fs.values[d * stride +
              static_cast<std::size_t>(pit->second) * fs.n_members +
              static_cast<std::size_t>(r.member - 1)] = r.value;
  }
  for (std::size_t d = 0; d < dates.size(); ++d)
    for (int p = 0; p < fs.n_points; ++p)
      for (int k = 0; k < fs.n_members; ++k)
        if (std::isnan(fs.values[d * stride + static_cast<std::size_t>(p) * fs.n_members +
                                 static_cast<std::size_t>(k)]))
          throw std::runtime_error("missing forecast for gridpoint " +
                                   grid.points[static_cast<std::size_t>(p)].id +
                                   " member " + std::to_string(k + 1) + " at " +
                                   dates[d].to_string());
  return fs;
}

std::vector<double> organize_observations(const ObservationTable& t,
                                          std::span<const Station> stations,
                                          std::span<const Date> dates,
                                          std::vector<std::string>& warnings) {
  std::unordered_map<std::string, std::size_t> station_index;
  for (std::size_t i = 0; i < stations.size(); ++i)
    station_index.emplace(stations[i].id, i);

  std::vector<double> obs(dates.size() * stations.size(), kNaN);
  std::set<std::string> unknown;
  std::size_t off_range = 0;
  for (const ObservationRecord& r : t.records) {
    const auto sit = station_index.find(r.station_id);
    if (sit == station_index.end()) {
      if (unknown.insert(r.station_id).second)
        warnings.push_back("observations for unknown station " + r.station_id +
                           " ignored");
      continue;
    }
    const auto dit = std::lower_bound(dates.begin(), dates.end(), r.valid_time);
    if (dit == dates.end() || *dit != r.valid_time) {
      ++off_range;
      continue;
    }
    obs[static_cast<std::size_t>(dit - dates.begin()) * stations.size() +
        sit->second] = r.value;
  }
  if (off_range > 0)
    warnings.push_back(std::to_string(off_range) +
                       " observation(s) on days without forecasts ignored");
  return obs;
}

PredictorTable build_predictors(const FieldSeries& field, const Grid& grid,
                                std::span<const Station> stations,
                                const StationAssignment& assign,
                                const RunConfig& cfg) {
  const std::size_t S = stations.size();
  const std::size_t D = field.dates.size();
  PredictorTable table;
  table.n_sites = S;
  table.values.resize(D * S);
  table.valid.assign(D * S, 0);

  std::vector<std::size_t> active;  // sites with a gridpoint assignment
  for (std::size_t s = 0; s < S; ++s)
    if (assign.grid_index[s] >= 0) active.push_back(s);
  if (active.empty())
    throw std::runtime_error("no station could be associated with the grid");

  std::vector<double> climo;
  if (cfg.use_climo && cfg.radius_km > 0.0) {
    climo.reserve(grid.points.size());
    for (const GridPoint& p : grid.points) climo.push_back(p.climo_factor);
  }

  if (cfg.radius_km > 0.0) {
    // Neighborhoods are centred on the station's assigned gridpoint.
    std::vector<NeighborhoodWeights> weights(active.size());
    std::vector<double> center_factor(active.size(), 1.0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t s = active[a];
      const GridPoint& gp =
          grid.points[static_cast<std::size_t>(assign.grid_index[s])];
      weights[a] = neighborhood_weights(grid, gp.coord_a, gp.coord_b, cfg.radius_km,
                                        stations[s].id);
      center_factor[a] = gp.climo_factor;
    }
    std::vector<PredictorSet> out(active.size());
    for (std::size_t d = 0; d < D; ++d) {
      neighborhood_predictor_batch(field.day_field(static_cast<int>(d)), weights,
                                   climo, center_factor, cfg.trace_threshold, out);
      for (std::size_t a = 0; a < active.size(); ++a) {
        table.values[d * S + active[a]] = out[a];
        table.valid[d * S + active[a]] = 1;
      }
    }
  } else {
    std::vector<int> site_point(active.size());
    for (std::size_t a = 0; a < active.size(); ++a)
      site_point[a] = assign.grid_index[active[a]];
    std::vector<PredictorSet> out(active.size());
    for (std::size_t d = 0; d < D; ++d) {
      local_predictor_batch(field.day_field(static_cast<int>(d)), site_point,
                            cfg.trace_threshold, out);
      for (std::size_t a = 0; a < active.size(); ++a) {
        table.values[d * S + active[a]] = out[a];
        table.valid[d * S + active[a]] = 1;
      }
    }
  }
  return table;
}

std::vector<TrainingWindow> build_windows(const FieldSeries& field,
                                          std::span<const Station> stations,
                                          const PredictorTable& predictors,
                                          std::span<const double> observations,
                                          int window_days) {
  const std::size_t S = stations.size();
  const std::vector<Date>& dates = field.dates;
  std::vector<TrainingWindow> windows;
  windows.reserve(dates.size());
  for (std::size_t di = 0; di < dates.size(); ++di) {
    TrainingWindow w;
    w.verification_day = dates[di];
    const Date low = dates[di] - window_days;
    std::size_t dj =
        static_cast<std::size_t>(std::lower_bound(dates.begin(), dates.end(), low) -
                                 dates.begin());
    for (; dj < di; ++dj) {
      bool used = false;
      for (std::size_t s = 0; s < S; ++s) {
        const PredictorSet* p = predictors.at(dj, s);
        if (!p) continue;
        const double y = observations[dj * S + s];
        if (std::isnan(y)) continue;
        w.pairs.push_back({*p, y});
        used = true;
      }
      if (used) w.days.push_back(dates[dj]);
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

PipelineResult run_fit(const RunConfig& cfg, const DataPaths& paths,
                       const std::string& out_dir) {
  set_max_threads(cfg.threads);
  PipelineResult res;
  LoadedInputs in = load_inputs(cfg, paths, true, res.warnings);
  const std::vector<double> obs = organize_observations(
      in.observations, in.stations, in.field.dates, res.warnings);
  const PredictorTable predictors =
      build_predictors(in.field, in.grid, in.stations, in.assignment, cfg);
  const std::vector<TrainingWindow> windows = build_windows(
      in.field, in.stations, predictors, obs, cfg.window_days);

  FitConfig fc;
  fc.window_days = cfg.window_days;
  fc.first_day_iterations = cfg.first_day_iterations;
  fc.daily_iterations = cfg.daily_iterations;
  fc.min_window_days = cfg.min_window_days;
  fc.neighborhood_model = cfg.radius_km > 0.0;
  RollingFit rf = rolling_fit(windows, fc);
  res.warnings.insert(res.warnings.end(), rf.warnings.begin(), rf.warnings.end());

  ensure_dir(out_dir);
  write_coefficients(out_dir + "/coefficients.csv", rf.days);
  return res;
}

PipelineResult run_predict(const RunConfig& cfg, const DataPaths& paths,
                           const std::string& out_dir) {
  set_max_threads(cfg.threads);
  PipelineResult res;
  LoadedInputs in = load_inputs(cfg, paths, false, res.warnings);
  const std::vector<CoefficientRow> coeff_rows = load_coefficients(paths.coefficients);
  std::unordered_map<std::int32_t, const EmosCoefficients*> by_day;
  for (const CoefficientRow& r : coeff_rows)
    by_day.emplace(r.coefficients.valid_day.days_since_epoch(), &r.coefficients);

  const PredictorTable predictors =
      build_predictors(in.field, in.grid, in.stations, in.assignment, cfg);

  ensure_dir(out_dir);
  std::ofstream out = open_output(out_dir + "/predictions.csv");
  out << "valid_time,station_id,m,sigma,xi,p_zero,q10,q50,q90";
  for (double t : cfg.thresholds) out << ",p_gt_" << threshold_label(t);
  out << '\n';

  std::size_t days_without_coeffs = 0;
  for (std::size_t d = 0; d < in.field.dates.size(); ++d) {
    const auto cit = by_day.find(in.field.dates[d].days_since_epoch());
    if (cit == by_day.end()) {
      ++days_without_coeffs;
      continue;
    }
    const EmosCoefficients& c = *cit->second;
    for (std::size_t s = 0; s < in.stations.size(); ++s) {
      const PredictorSet* p = predictors.at(d, s);
      if (!p) continue;
      const CensoredGevParams q = predict(c, *p);
      out << in.field.dates[d].to_string() << ',' << in.stations[s].id << ','
          << format_double(q.m) << ',' << format_double(q.sigma) << ','
          << format_double(q.xi) << ',' << format_double(censored_cdf(q, 0.0)) << ','
          << format_double(censored_quantile(q, 0.1)) << ','
          << format_double(censored_quantile(q, 0.5)) << ','
          << format_double(censored_quantile(q, 0.9));
      for (double t : cfg.thresholds) out << ',' << format_double(1.0 - censored_cdf(q, t));
      out << '\n';
    }
  }
  if (days_without_coeffs > 0)
    res.warnings.push_back(std::to_string(days_without_coeffs) +
                           " forecast day(s) without coefficients skipped");
  return res;
}

PipelineResult run_verify(const RunConfig& cfg, const DataPaths& paths,
                          const std::string& out_dir, std::optional<Date> from,
                          std::optional<Date> to) {
  set_max_threads(cfg.threads);
  PipelineResult res;
  LoadedInputs in = load_inputs(cfg, paths, true, res.warnings);
  const std::vector<double> obs = organize_observations(
      in.observations, in.stations, in.field.dates, res.warnings);
  const std::vector<CoefficientRow> coeff_rows = load_coefficients(paths.coefficients);
  std::unordered_map<std::int32_t, const EmosCoefficients*> by_day;
  for (const CoefficientRow& r : coeff_rows)
    by_day.emplace(r.coefficients.valid_day.days_since_epoch(), &r.coefficients);

  const PredictorTable predictors =
      build_predictors(in.field, in.grid, in.stations, in.assignment, cfg);

  // Assemble the scoring batch.
  const std::size_t S = in.stations.size();
  const int K = in.field.n_members;
  std::vector<CensoredGevParams> params;
  std::vector<double> observations;
  std::vector<double> member_rows;
  std::vector<ScoredPair> pairs;
  std::size_t days_without_coeffs = 0;
  for (std::size_t d = 0; d < in.field.dates.size(); ++d) {
    const Date day = in.field.dates[d];
    if (from && day < *from) continue;
    if (to && day > *to) continue;
    const auto cit = by_day.find(day.days_since_epoch());
    if (cit == by_day.end()) {
      ++days_without_coeffs;
      continue;
    }
    const MemberField mf = in.field.day_field(static_cast<int>(d));
    for (std::size_t s = 0; s < S; ++s) {
      const PredictorSet* p = predictors.at(d, s);
      if (!p) continue;
      const double y = obs[d * S + s];
      if (std::isnan(y)) continue;
      params.push_back(predict(*cit->second, *p));
      observations.push_back(y);
      const int gp = in.assignment.grid_index[s];
      for (int k = 0; k < K; ++k) member_rows.push_back(mf.value(gp, k));
      ScoredPair sp;
      sp.day = day;
      sp.site = in.stations[s].id;
      pairs.push_back(std::move(sp));
    }
  }
  if (days_without_coeffs > 0)
    res.warnings.push_back(std::to_string(days_without_coeffs) +
                           " day(s) without coefficients skipped");
  if (pairs.empty())
    throw std::runtime_error("verify: no forecast-observation pairs to score");

  ScoreBatchInput sbi;
  sbi.params = params;
  sbi.observations = observations;
  sbi.member_rows = member_rows;
  sbi.n_members = K;
  sbi.thresholds = cfg.thresholds;
  score_batch(sbi, pairs);

  BootstrapConfig bc;
  bc.replicates = cfg.bootstrap_replicates;
  bc.level_pct = cfg.bootstrap_level;
  bc.seed = cfg.seed;
  const VerificationReport rep = verify_pairs(pairs, cfg.thresholds, bc);

  ensure_dir(out_dir);
  nlohmann::ordered_json j;
  j["n_pairs"] = rep.n_pairs;
  j["n_days"] = rep.n_days;
  j["date_range"] = {{"from", pairs.front().day.to_string()},
                     {"to", pairs.back().day.to_string()}};
  j["bootstrap"] = {{"replicates", bc.replicates},
                    {"level_pct", bc.level_pct},
                    {"seed", bc.seed}};
  j["crps"] = {{"model", interval_json(rep.crps_model)},
               {"reference", interval_json(rep.crps_reference)},
               {"skill", interval_json(rep.crpss)},
               {"p_value_vs_reference", rep.p_value_crps}};
  j["thresholds"] = nlohmann::ordered_json::array();
  for (const ThresholdReport& tr : rep.thresholds) {
    const std::string label = threshold_label(tr.threshold);
    nlohmann::ordered_json tj;
    tj["threshold"] = tr.threshold;
    tj["brier_model"] = interval_json(tr.bs_model);
    tj["brier_reference"] = interval_json(tr.bs_reference);
    tj["brier_skill"] = interval_json(tr.bss);
    tj["p_value_vs_reference"] = tr.p_value_bs;
    tj["reliability"] = interval_json(tr.reliability);
    tj["resolution"] = interval_json(tr.resolution);
    tj["uncertainty"] = interval_json(tr.uncertainty);
    tj["reliability_bias_corrected"] = interval_json(tr.reliability_bc);
    tj["resolution_bias_corrected"] = interval_json(tr.resolution_bc);
    tj["uncertainty_bias_corrected"] = interval_json(tr.uncertainty_bc);
    tj["reliability_file"] = "reliability_" + label + ".csv";
    j["thresholds"].push_back(std::move(tj));

    std::ofstream rout = open_output(out_dir + "/reliability_" + label + ".csv");
    rout << "bin_index,count,mean_prob,obs_freq,ci_low,ci_high\n";
    for (int b = 0; b < kReliabilityBins; ++b) {
      const ReliabilityBin& rb = tr.diagram.bins[b];
      auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
      rout << b << ',' << rb.count << ',' << cell(rb.mean_prob) << ','
           << cell(rb.obs_freq) << ',' << cell(rb.ci_low) << ',' << cell(rb.ci_high)
           << '\n';
    }
  }
  std::ofstream jout = open_output(out_dir + "/report.json");
  jout << j.dump(2) << '\n';
  return res;
}

PipelineResult run_simulate(const ScenarioSpec& spec, const std::string& out_dir) {
  PipelineResult res;
  const Scenario sc = generate_scenario(spec);
  ensure_dir(out_dir);
  write_forecasts(out_dir + "/forecasts.csv", sc.forecasts);
  write_observations(out_dir + "/observations.csv", sc.observations);
  write_stations(out_dir + "/stations.csv", sc.stations);
  write_grid(out_dir + "/grid.csv", sc.grid);

  DayFit truth;
  truth.coefficients = sc.truth;
  truth.coefficients.valid_day = spec.start_day;
  truth.objective_value = kNaN;
  truth.n_pairs = 0;
  write_coefficients(out_dir + "/truth_coefficients.csv", {&truth, 1});

  std::ofstream meta = open_output(out_dir + "/scenario.txt");
  meta << "days=" << spec.n_days << '\n'
       << "sites=" << spec.n_sites << '\n'
       << "members=" << spec.n_members << '\n'
       << "seed=" << spec.seed << '\n'
       << "spacing_km=" << format_double(spec.spacing_km) << '\n'
       << "displacement_km=" << format_double(spec.displacement_km) << '\n'
       << "obs_noise_scale=" << format_double(spec.obs_noise_scale) << '\n'
       << "field_log_mean=" << format_double(spec.field_log_mean) << '\n'
       << "field_log_std=" << format_double(spec.field_log_std) << '\n'
       << "field_range_km=" << format_double(spec.field_range_km) << '\n'
       << "member_noise=" << format_double(spec.member_noise) << '\n'
       << "dry_offset=" << format_double(spec.dry_offset) << '\n'
       << "climo_variation=" << (spec.climo_variation ? "true" : "false") << '\n'
       << "start_day=" << spec.start_day.to_string() << '\n';
  return res;
}

}  // namespace emos
