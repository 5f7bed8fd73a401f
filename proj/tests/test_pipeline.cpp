#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "emos/pipeline.hpp"

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("emos_pipeline_test_" + std::to_string(++counter));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string dir(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t from = 0;
  while (true) {
    const std::size_t comma = line.find(',', from);
    out.push_back(line.substr(from, comma - from));
    if (comma == std::string::npos) break;
    from = comma + 1;
  }
  return out;
}

emos::DataPaths fixture_paths(const std::string& fix) {
  emos::DataPaths p;
  p.forecasts = fix + "/forecasts.csv";
  p.observations = fix + "/observations.csv";
  p.stations = fix + "/stations.csv";
  p.grid = fix + "/grid.csv";
  return p;
}

// Small complete forecast table over a 2-point grid, for the assembly tests.
struct TinySetup {
  emos::Grid grid;
  std::vector<emos::Station> stations;
  emos::ForecastTable table;
  emos::Date d0 = emos::Date::from_ymd(2011, 6, 1);

  TinySetup(int n_days, int n_members) {
    grid.coord_system = emos::CoordSystem::XyKm;
    grid.points = {{"G1", 0.0, 0.0, 1.0}, {"G2", 10.0, 0.0, 1.0}};
    stations = {{"S1", 0.0, 0.0}, {"S2", 10.0, 0.0}};
    table.n_members = n_members;
    for (int d = 0; d < n_days; ++d)
      for (const emos::GridPoint& gp : grid.points)
        for (int k = 1; k <= n_members; ++k)
          table.records.push_back(
              {d0 + d, gp.id, k, 0.5 * k + 0.1 * d + (gp.id == "G2" ? 3.0 : 0.0)});
  }
};

}  // namespace

TEST_CASE("organize_field builds a dense, validated cube") {
  TinySetup t(3, 2);

  // Insertion order must not matter.
  std::swap(t.table.records.front(), t.table.records.back());
  const emos::FieldSeries fs = emos::organize_field(t.table, t.grid);
  REQUIRE(fs.dates.size() == 3);
  CHECK(fs.dates[0] == t.d0);
  CHECK(fs.dates[2] == t.d0 + 2);
  CHECK(fs.n_points == 2);
  CHECK(fs.n_members == 2);

  const emos::MemberField day0 = fs.day_field(0);
  CHECK(day0.value(0, 0) == 0.5);       // G1 member 1 on day 0
  CHECK(day0.value(1, 1) == 1.0 + 3.0);  // G2 member 2 on day 0
  const emos::MemberField day2 = fs.day_field(2);
  CHECK(day2.value(0, 1) == doctest::Approx(1.2).epsilon(1e-15));

  emos::ForecastTable unknown = t.table;
  unknown.records[0].point_id = "GX";
  try {
    emos::organize_field(unknown, t.grid);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("GX") != std::string::npos);
  }

  emos::ForecastTable holes = t.table;
  holes.records.pop_back();  // after the swap this drops G1 member 1, day 0
  try {
    emos::organize_field(holes, t.grid);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("G1") != std::string::npos);
    CHECK(msg.find("member 1") != std::string::npos);
    CHECK(msg.find("2011-06-01") != std::string::npos);
  }
}

TEST_CASE("organize_observations aligns, warns and leaves gaps as NaN") {
  TinySetup t(3, 2);
  const emos::FieldSeries fs = emos::organize_field(t.table, t.grid);

  emos::ObservationTable obs;
  obs.records.push_back({t.d0, "S2", 1.5});
  obs.records.push_back({t.d0 + 1, "S1", 0.0});
  obs.records.push_back({t.d0 + 1, "S2", 2.25});
  obs.records.push_back({t.d0, "S9", 4.0});        // unknown station
  obs.records.push_back({t.d0 + 2, "S9", 4.0});    // same unknown, one warning
  obs.records.push_back({t.d0 + 30, "S1", 1.0});   // day without forecasts
  obs.records.push_back({t.d0 - 1, "S2", 1.0});    // day without forecasts

  std::vector<std::string> warnings;
  const std::vector<double> m =
      emos::organize_observations(obs, t.stations, fs.dates, warnings);
  REQUIRE(m.size() == 6);
  CHECK(std::isnan(m[0]));  // day 0, S1 missing
  CHECK(m[1] == 1.5);
  CHECK(m[2] == 0.0);
  CHECK(m[3] == 2.25);
  CHECK(std::isnan(m[4]));
  CHECK(std::isnan(m[5]));

  REQUIRE(warnings.size() == 2);
  CHECK(warnings[0].find("S9") != std::string::npos);
  CHECK(warnings[1].find("2 observation(s)") != std::string::npos);
}

TEST_CASE("build_predictors honours the model variant and exclusions") {
  TinySetup t(2, 3);
  t.stations.push_back({"S3", 4000.0, 0.0});  // beyond any sensible cutoff
  const emos::FieldSeries fs = emos::organize_field(t.table, t.grid);
  const emos::StationAssignment assign =
      emos::associate_stations(t.stations, t.grid, 10.0);
  REQUIRE(assign.grid_index[2] == -1);

  emos::RunConfig local;
  local.radius_km = 0.0;
  const emos::PredictorTable lp =
      emos::build_predictors(fs, t.grid, t.stations, assign, local);
  CHECK(lp.n_sites == 3);
  REQUIRE(lp.at(0, 0) != nullptr);
  CHECK(!lp.at(0, 0)->nbr_md.has_value());
  CHECK(lp.at(0, 2) == nullptr);
  CHECK(lp.at(1, 2) == nullptr);

  // Against a direct local computation.
  emos::EnsembleForecast ef;
  for (int k = 0; k < 3; ++k) ef.members.push_back(fs.day_field(0).value(1, k));
  const emos::PredictorSet want = emos::local_predictors(ef, 0.0);
  CHECK(lp.at(0, 1)->mean == want.mean);
  CHECK(lp.at(0, 1)->md == want.md);

  emos::RunConfig nbr;
  nbr.radius_km = 15.0;  // both gridpoints fall inside each other's circle
  const emos::PredictorTable np =
      emos::build_predictors(fs, t.grid, t.stations, assign, nbr);
  REQUIRE(np.at(0, 0) != nullptr);
  CHECK(np.at(0, 0)->nbr_md.has_value());
  CHECK(np.at(0, 0)->mean != lp.at(0, 0)->mean);  // averaged across the area

  // No assignable station at all is an error.
  const std::vector<emos::Station> misplaced = {{"S1", 4000.0, 0.0}};
  const emos::StationAssignment none =
      emos::associate_stations(misplaced, t.grid, 10.0);
  CHECK_THROWS_AS(emos::build_predictors(fs, t.grid, misplaced, none, local),
                  std::runtime_error);
}

TEST_CASE("build_windows collects the trailing window") {
  TinySetup t(6, 2);
  const emos::FieldSeries fs = emos::organize_field(t.table, t.grid);
  const emos::StationAssignment assign =
      emos::associate_stations(t.stations, t.grid, 10.0);
  emos::RunConfig cfg;
  const emos::PredictorTable pt =
      emos::build_predictors(fs, t.grid, t.stations, assign, cfg);

  emos::ObservationTable obs;
  for (int d = 0; d < 6; ++d) {
    if (d != 0) obs.records.push_back({t.d0 + d, "S1", 1.0 + d});
    obs.records.push_back({t.d0 + d, "S2", 0.5 * d});
  }
  std::vector<std::string> warnings;
  const std::vector<double> m =
      emos::organize_observations(obs, t.stations, fs.dates, warnings);

  const std::vector<emos::TrainingWindow> w =
      emos::build_windows(fs, t.stations, pt, m, 3);
  REQUIRE(w.size() == 6);
  CHECK(w[0].pairs.empty());
  CHECK(w[0].days.empty());

  CHECK(w[1].days == std::vector<emos::Date>{t.d0});
  CHECK(w[1].pairs.size() == 1);  // S1 has no day-0 observation

  CHECK(w[2].days.size() == 2);
  CHECK(w[2].pairs.size() == 3);

  // Day 5 trains on days 2..4 only: day 1 has fallen out of the window.
  CHECK(w[5].days == (std::vector<emos::Date>{t.d0 + 2, t.d0 + 3, t.d0 + 4}));
  CHECK(w[5].pairs.size() == 6);
  CHECK(w[5].verification_day == t.d0 + 5);

  // Pairs carry the predictor of their (day, site) cell.
  CHECK(w[1].pairs[0].predictors.mean == pt.at(0, 1)->mean);
  CHECK(w[1].pairs[0].observation == 0.0);
}

TEST_CASE("fit, predict and verify against a simulated fixture") {
  TempDir tmp;
  const std::string fix = tmp.dir("fixture");
  emos::ScenarioSpec spec;
  spec.n_days = 45;
  spec.n_sites = 25;
  spec.n_members = 8;
  spec.seed = 33;
  spec.truth = emos::default_scenario_truth();
  emos::run_simulate(spec, fix);

  for (const char* name : {"forecasts.csv", "observations.csv", "stations.csv",
                           "grid.csv", "truth_coefficients.csv", "scenario.txt"})
    CHECK(std::filesystem::exists(std::filesystem::path(fix) / name));

  emos::DataPaths paths = fixture_paths(fix);
  emos::RunConfig cfg;
  cfg.window_days = 15;
  cfg.min_window_days = 5;
  cfg.bootstrap_replicates = 150;
  cfg.seed = 5;

  const std::string fit_dir = tmp.dir("fit");
  const emos::PipelineResult fit_res = emos::run_fit(cfg, paths, fit_dir);
  paths.coefficients = fit_dir + "/coefficients.csv";
  CHECK(fit_res.warnings.size() >= 5);  // five thin windows at the start

  const std::vector<emos::CoefficientRow> rows =
      emos::load_coefficients(paths.coefficients);
  REQUIRE(rows.size() == 45);
  CHECK(std::isnan(rows[0].objective_value));  // day 1 has no training pairs
  CHECK(rows[0].n_pairs == 0);
  CHECK(rows[44].n_pairs > 0);
  CHECK(std::isfinite(rows[44].objective_value));
  for (const emos::CoefficientRow& r : rows) CHECK(r.coefficients.admissible());

  // Predictions re-derive exactly from the emitted parameters.
  const std::string pred_dir = tmp.dir("pred");
  emos::run_predict(cfg, paths, pred_dir);
  const std::vector<std::string> lines = read_lines(pred_dir + "/predictions.csv");
  REQUIRE(lines.size() == 1u + 45u * 25u);
  CHECK(lines[0] ==
        "valid_time,station_id,m,sigma,xi,p_zero,q10,q50,q90,p_gt_0,p_gt_5,p_gt_10,"
        "p_gt_15");
  for (std::size_t i = 1; i < lines.size(); i += 97) {
    const std::vector<std::string> f = split_csv(lines[i]);
    REQUIRE(f.size() == 13);
    emos::CensoredGevParams q;
    q.m = std::strtod(f[2].c_str(), nullptr);
    q.sigma = std::strtod(f[3].c_str(), nullptr);
    q.xi = std::strtod(f[4].c_str(), nullptr);
    CHECK(emos::format_double(emos::censored_cdf(q, 0.0)) == f[5]);
    CHECK(emos::format_double(emos::censored_quantile(q, 0.1)) == f[6]);
    CHECK(emos::format_double(emos::censored_quantile(q, 0.5)) == f[7]);
    CHECK(emos::format_double(emos::censored_quantile(q, 0.9)) == f[8]);
    const double thr[] = {0.0, 5.0, 10.0, 15.0};
    for (int t = 0; t < 4; ++t)
      CHECK(emos::format_double(1.0 - emos::censored_cdf(q, thr[t])) ==
            f[static_cast<std::size_t>(9 + t)]);
  }

  // Verification report over the post-burn-in days.
  const std::string ver_dir = tmp.dir("verify");
  emos::run_verify(cfg, paths, ver_dir, spec.start_day + 10);
  const nlohmann::json j =
      nlohmann::json::parse(read_file(ver_dir + "/report.json"));
  CHECK(j["n_pairs"] == 35 * 25);
  CHECK(j["n_days"] == 35);
  CHECK(j["date_range"]["from"] == "2011-06-11");
  CHECK(j["bootstrap"]["replicates"] == 150);
  CHECK(j["crps"]["model"]["value"].get<double>() > 0.0);
  CHECK(j["crps"]["model"]["ci_low"].get<double>() <=
        j["crps"]["model"]["ci_high"].get<double>());
  const double p = j["crps"]["p_value_vs_reference"].get<double>();
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  REQUIRE(j["thresholds"].size() == 4);
  CHECK(j["thresholds"][0]["threshold"] == 0.0);
  CHECK(j["thresholds"][0]["reliability_file"] == "reliability_0.csv");
  CHECK(j["thresholds"][3]["reliability_file"] == "reliability_15.csv");
  for (const char* name :
       {"reliability_0.csv", "reliability_5.csv", "reliability_10.csv",
        "reliability_15.csv"}) {
    const std::vector<std::string> rl = read_lines(ver_dir + "/" + name);
    REQUIRE(rl.size() == 12);
    CHECK(rl[0] == "bin_index,count,mean_prob,obs_freq,ci_low,ci_high");
  }

  // Classical and bias-corrected partitions as reported sum to the same
  // binned score, and both track the raw Brier score closely (exact equality
  // would need bin-constant forecast probabilities).
  const auto& t0 = j["thresholds"][0];
  const double identity = t0["reliability"]["value"].get<double>() -
                          t0["resolution"]["value"].get<double>() +
                          t0["uncertainty"]["value"].get<double>();
  const double identity_bc = t0["reliability_bias_corrected"]["value"].get<double>() -
                             t0["resolution_bias_corrected"]["value"].get<double>() +
                             t0["uncertainty_bias_corrected"]["value"].get<double>();
  CHECK(std::abs(identity - identity_bc) < 1e-12);
  CHECK(std::abs(identity - t0["brier_model"]["value"].get<double>()) < 0.01);
}

TEST_CASE("pipeline runs are deterministic and variant-consistent") {
  TempDir tmp;
  const std::string fix = tmp.dir("fixture");
  emos::ScenarioSpec spec;
  spec.n_days = 20;
  spec.n_sites = 16;
  spec.n_members = 6;
  spec.seed = 71;
  spec.truth = emos::default_scenario_truth();
  emos::run_simulate(spec, fix);

  emos::DataPaths paths = fixture_paths(fix);
  emos::RunConfig cfg;
  cfg.window_days = 10;
  cfg.min_window_days = 4;

  const std::string fit1 = tmp.dir("fit1");
  const std::string fit2 = tmp.dir("fit2");
  emos::run_fit(cfg, paths, fit1);
  emos::run_fit(cfg, paths, fit2);
  CHECK(read_file(fit1 + "/coefficients.csv") == read_file(fit2 + "/coefficients.csv"));

  // A neighborhood radius smaller than the grid spacing leaves only the
  // station's own gridpoint in the circle; with local coefficients the
  // predictions must be byte-identical to the local run.
  paths.coefficients = fit1 + "/coefficients.csv";
  const std::string pred_local = tmp.dir("pred_local");
  emos::run_predict(cfg, paths, pred_local);
  emos::RunConfig tiny = cfg;
  tiny.radius_km = 5.0;  // spacing is 10 km
  const std::string pred_tiny = tmp.dir("pred_tiny");
  emos::run_predict(tiny, paths, pred_tiny);
  CHECK(read_file(pred_local + "/predictions.csv") ==
        read_file(pred_tiny + "/predictions.csv"));

  // use_climo without a climo column in the grid is rejected.
  emos::RunConfig climo = cfg;
  climo.use_climo = true;
  climo.radius_km = 15.0;
  try {
    emos::run_fit(climo, paths, tmp.dir("fit3"));
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("climo") != std::string::npos);
  }
}
