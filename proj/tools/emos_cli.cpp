// Command-line front end: simulate / fit / predict / verify.
//
// Run configuration comes from an optional key=value file (--config) with
// individual command-line overrides applied on top, so a flag always wins
// over the file.

#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "emos/data.hpp"
#include "emos/pipeline.hpp"
#include "emos/synth.hpp"

namespace {

struct RunArgs {
  std::string config_path;
  emos::DataPaths paths;
  std::string out_dir = ".";
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string from_str, to_str;
};

void add_run_options(CLI::App* cmd, RunArgs& a, bool needs_observations,
                     bool needs_coefficients) {
  cmd->add_option("--config", a.config_path, "key=value run configuration file");
  cmd->add_option("--forecasts", a.paths.forecasts, "ensemble forecast CSV")
      ->required();
  if (needs_observations)
    cmd->add_option("--observations", a.paths.observations, "observation CSV")
        ->required();
  cmd->add_option("--stations", a.paths.stations, "station list CSV")->required();
  cmd->add_option("--grid", a.paths.grid, "gridpoint list CSV")->required();
  if (needs_coefficients)
    cmd->add_option("--coefficients", a.paths.coefficients,
                    "coefficient chain CSV from a fit run")
        ->required();
  cmd->add_option("--out-dir", a.out_dir, "output directory (default: .)");

  auto override_opt = [cmd, &a](const std::string& flag, const std::string& key,
                                const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag,
        [&a, key](const std::string& v) { a.overrides.emplace_back(key, v); },
        desc);
  };
  override_opt("--window-days", "window_days", "training window length in days");
  override_opt("--radius-km", "radius_km",
               "neighborhood radius in km; 0 disables the neighborhood term");
  cmd->add_flag_callback(
      "--climo", [&a] { a.overrides.emplace_back("use_climo", "true"); },
      "standardise neighborhood members by gridpoint climatology factors");
  override_opt("--trace-threshold", "trace_threshold",
               "member values at or below this count as dry");
  override_opt("--thresholds", "thresholds",
               "comma-separated exceedance thresholds (ascending)");
  override_opt("--replicates", "bootstrap_replicates", "bootstrap replicate count");
  override_opt("--level", "bootstrap_level", "bootstrap confidence level in percent");
  override_opt("--seed", "seed", "bootstrap RNG seed");
  override_opt("--first-day-iterations", "first_day_iterations",
               "optimizer iterations on the first fitted day");
  override_opt("--daily-iterations", "daily_iterations",
               "optimizer iterations on each later day");
  override_opt("--min-window-days", "min_window_days",
               "minimum distinct training days required to fit");
  override_opt("--cutoff-km", "station_cutoff_km",
               "station-to-gridpoint association cutoff in km");
  override_opt("--threads", "threads", "worker threads (0 = library default)");
}

emos::RunConfig resolve_config(const RunArgs& a) {
  emos::RunConfig cfg;
  if (!a.config_path.empty()) cfg = emos::load_config(a.config_path);
  for (const auto& [key, value] : a.overrides)
    emos::apply_config_entry(cfg, key, value);
  return cfg;
}

std::optional<emos::Date> parse_date_arg(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return emos::Date::parse(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"censored-GEV ensemble post-processing for precipitation"};
  app.require_subcommand(1);

  RunArgs fit_args, predict_args, verify_args;
  CLI::App* fit = app.add_subcommand("fit", "fit the rolling coefficient chain");
  add_run_options(fit, fit_args, true, false);
  CLI::App* predict =
      app.add_subcommand("predict", "evaluate fitted predictive distributions");
  add_run_options(predict, predict_args, false, true);
  CLI::App* verify =
      app.add_subcommand("verify", "score fitted forecasts against observations");
  add_run_options(verify, verify_args, true, true);
  verify->add_option("--from", verify_args.from_str,
                     "first verification day (YYYY-MM-DD)");
  verify->add_option("--to", verify_args.to_str,
                     "last verification day (YYYY-MM-DD)");

  emos::ScenarioSpec spec;
  spec.truth = emos::default_scenario_truth();
  std::string truth_path, start_str, sim_out_dir = ".";
  CLI::App* simulate =
      app.add_subcommand("simulate", "write a synthetic forecast/observation fixture");
  simulate->add_option("--days", spec.n_days, "number of forecast days")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--sites", spec.n_sites, "number of gridpoints/stations")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--members", spec.n_members, "ensemble size")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--seed", spec.seed, "scenario RNG seed");
  simulate->add_option("--truth", truth_path,
                       "coefficient CSV supplying the generating truth (first row)");
  simulate->add_option("--spacing-km", spec.spacing_km, "grid spacing in km");
  simulate->add_option("--displacement-km", spec.displacement_km,
                       "spatial displacement error of the ensemble");
  simulate->add_option("--obs-noise-scale", spec.obs_noise_scale,
                       "scale on the observation sampling spread");
  simulate->add_option("--field-log-mean", spec.field_log_mean,
                       "log-scale mean of the synthetic field");
  simulate->add_option("--field-log-std", spec.field_log_std,
                       "log-scale standard deviation of the synthetic field");
  simulate->add_option("--field-range-km", spec.field_range_km,
                       "correlation range of the synthetic field");
  simulate->add_option("--member-noise", spec.member_noise,
                       "per-member multiplicative noise level");
  simulate->add_option("--dry-offset", spec.dry_offset,
                       "offset subtracted before censoring at zero");
  simulate->add_flag("--climo-variation", spec.climo_variation,
                     "give gridpoints distinct climatology factors");
  simulate->add_option("--start", start_str, "first forecast day (YYYY-MM-DD)");
  simulate->add_option("--out-dir", sim_out_dir, "output directory (default: .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    emos::PipelineResult result;
    std::string note;
    if (fit->parsed()) {
      result = emos::run_fit(resolve_config(fit_args), fit_args.paths,
                             fit_args.out_dir);
      note = fit_args.out_dir + "/coefficients.csv";
    } else if (predict->parsed()) {
      result = emos::run_predict(resolve_config(predict_args), predict_args.paths,
                                 predict_args.out_dir);
      note = predict_args.out_dir + "/predictions.csv";
    } else if (verify->parsed()) {
      result = emos::run_verify(resolve_config(verify_args), verify_args.paths,
                                verify_args.out_dir,
                                parse_date_arg(verify_args.from_str),
                                parse_date_arg(verify_args.to_str));
      note = verify_args.out_dir + "/report.json";
    } else {
      if (!start_str.empty()) spec.start_day = emos::Date::parse(start_str);
      if (!truth_path.empty()) {
        const auto rows = emos::load_coefficients(truth_path);
        if (rows.empty()) throw std::runtime_error(truth_path + ": no coefficient rows");
        spec.truth = rows.front().coefficients;
      }
      result = emos::run_simulate(spec, sim_out_dir);
      note = sim_out_dir + "/forecasts.csv";
    }
    for (const std::string& w : result.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << note << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
