// Benchmarks the OpenMP kernels against their serial reference twins on a
// synthetic workload and checks that both produce bit-identical results.
// Exits nonzero on any mismatch, so it doubles as a consistency check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "emos/fit.hpp"
#include "emos/parallel.hpp"
#include "emos/pipeline.hpp"
#include "emos/synth.hpp"
#include "emos/verify.hpp"

namespace {

double best_of(int reps, const std::function<void()>& f) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

struct BenchRow {
  std::string name;
  std::size_t n = 0;
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
  bool match = false;
};

std::vector<double> flatten_scores(const std::vector<emos::ScoredPair>& v) {
  std::vector<double> flat;
  for (const emos::ScoredPair& s : v) {
    flat.push_back(s.crps_model);
    flat.push_back(s.crps_ens);
    flat.insert(flat.end(), s.p_model.begin(), s.p_model.end());
    flat.insert(flat.end(), s.p_ens.begin(), s.p_ens.end());
    for (int o : s.occurred) flat.push_back(o);
  }
  return flat;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel benchmark: serial reference vs OpenMP"};
  int sites = 400, days = 35, members = 20, replicates = 2000, reps = 5, threads = 0;
  double radius = 25.0;
  app.add_option("--sites", sites)->check(CLI::PositiveNumber);
  app.add_option("--days", days)->check(CLI::PositiveNumber);
  app.add_option("--members", members)->check(CLI::PositiveNumber);
  app.add_option("--radius-km", radius);
  app.add_option("--replicates", replicates)->check(CLI::PositiveNumber);
  app.add_option("--reps", reps, "timing repetitions, best is reported")
      ->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "0 = library default");
  CLI11_PARSE(app, argc, argv);

  emos::set_max_threads(threads);
  std::printf("OpenMP %s, %d worker thread(s)\n\n",
              emos::openmp_enabled() ? "enabled" : "disabled", emos::max_threads());

  emos::ScenarioSpec spec;
  spec.n_sites = sites;
  spec.n_days = days;
  spec.n_members = members;
  spec.seed = 7;
  spec.truth = emos::default_scenario_truth();
  const emos::Scenario sc = emos::generate_scenario(spec);
  const emos::FieldSeries field = emos::organize_field(sc.forecasts, sc.grid);
  const std::size_t S = sc.stations.size();
  const std::size_t D = field.dates.size();

  std::vector<std::string> warnings;
  const std::vector<double> obs =
      emos::organize_observations(sc.observations, sc.stations, field.dates, warnings);

  std::vector<BenchRow> rows;

  // --- neighborhood predictors over one day's field ------------------------
  std::vector<emos::NeighborhoodWeights> weights(S);
  std::vector<double> center(S, 1.0);
  for (std::size_t s = 0; s < S; ++s) {
    const emos::GridPoint& gp = sc.grid.points[s];
    weights[s] = emos::neighborhood_weights(sc.grid, gp.coord_a, gp.coord_b, radius,
                                            sc.stations[s].id);
  }
  const emos::MemberField f0 = field.day_field(0);
  std::vector<emos::PredictorSet> nbr_par(S), nbr_ser(S);
  {
    BenchRow r;
    r.name = "neighborhood_predictor_batch";
    r.n = S;
    r.parallel_ms = best_of(reps, [&] {
      emos::neighborhood_predictor_batch(f0, weights, {}, center, 0.0, nbr_par);
    });
    r.serial_ms = best_of(reps, [&] {
      emos::neighborhood_predictor_batch_serial(f0, weights, {}, center, 0.0, nbr_ser);
    });
    std::vector<double> a, b;
    for (std::size_t s = 0; s < S; ++s) {
      a.insert(a.end(), {nbr_par[s].mean, nbr_par[s].zero_frac, nbr_par[s].md,
                         *nbr_par[s].nbr_md});
      b.insert(b.end(), {nbr_ser[s].mean, nbr_ser[s].zero_frac, nbr_ser[s].md,
                         *nbr_ser[s].nbr_md});
    }
    r.match = bits_equal(a, b);
    rows.push_back(r);
  }

  // --- per-pair training loss over all (day, site) pairs -------------------
  std::vector<int> site_point(S);
  for (std::size_t s = 0; s < S; ++s) site_point[s] = static_cast<int>(s);
  std::vector<emos::TrainingPair> pairs;
  std::vector<std::size_t> pair_day, pair_site;
  std::vector<emos::PredictorSet> local_row(S);
  for (std::size_t d = 0; d < D; ++d) {
    emos::local_predictor_batch(field.day_field(static_cast<int>(d)), site_point,
                                0.0, local_row);
    for (std::size_t s = 0; s < S; ++s) {
      const double y = obs[d * S + s];
      if (std::isnan(y)) continue;
      pairs.push_back({local_row[s], y});
      pair_day.push_back(d);
      pair_site.push_back(s);
    }
  }
  const emos::EmosCoefficients truth = emos::default_scenario_truth();
  std::vector<double> terms_par(pairs.size()), terms_ser(pairs.size());
  {
    BenchRow r;
    r.name = "crps_loss_terms";
    r.n = pairs.size();
    r.parallel_ms =
        best_of(reps, [&] { emos::crps_loss_terms(truth, pairs, terms_par); });
    r.serial_ms =
        best_of(reps, [&] { emos::crps_loss_terms_serial(truth, pairs, terms_ser); });
    r.match = bits_equal(terms_par, terms_ser);
    rows.push_back(r);
  }

  // --- scoring batch --------------------------------------------------------
  const std::vector<double> thresholds = {0.0, 5.0, 10.0};
  std::vector<emos::CensoredGevParams> params;
  std::vector<double> observations, member_rows;
  std::vector<emos::ScoredPair> scored_par(pairs.size()), scored_ser(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    params.push_back(emos::predict(truth, pairs[i].predictors));
    observations.push_back(pairs[i].observation);
    const emos::MemberField mf = field.day_field(static_cast<int>(pair_day[i]));
    for (int k = 0; k < mf.n_members; ++k)
      member_rows.push_back(mf.value(static_cast<int>(pair_site[i]), k));
    scored_par[i].day = scored_ser[i].day = field.dates[pair_day[i]];
    scored_par[i].site = scored_ser[i].site = sc.stations[pair_site[i]].id;
  }
  emos::ScoreBatchInput sbi;
  sbi.params = params;
  sbi.observations = observations;
  sbi.member_rows = member_rows;
  sbi.n_members = field.n_members;
  sbi.thresholds = thresholds;
  {
    BenchRow r;
    r.name = "score_batch";
    r.n = pairs.size();
    r.parallel_ms = best_of(reps, [&] { emos::score_batch(sbi, scored_par); });
    r.serial_ms = best_of(reps, [&] { emos::score_batch_serial(sbi, scored_ser); });
    r.match = bits_equal(flatten_scores(scored_par), flatten_scores(scored_ser));
    rows.push_back(r);
  }

  // --- day-block bootstrap ----------------------------------------------------
  const std::vector<emos::DayAggregates> agg =
      emos::aggregate_by_day(scored_par, thresholds.size());
  const std::size_t row_size = emos::replicate_row_size(thresholds.size());
  std::vector<double> boot_par(static_cast<std::size_t>(replicates) * row_size);
  std::vector<double> boot_ser(boot_par.size());
  {
    BenchRow r;
    r.name = "bootstrap_replicates";
    r.n = static_cast<std::size_t>(replicates);
    r.parallel_ms = best_of(reps, [&] {
      emos::bootstrap_replicates(agg, thresholds.size(), replicates, 42, boot_par);
    });
    r.serial_ms = best_of(reps, [&] {
      emos::bootstrap_replicates_serial(agg, thresholds.size(), replicates, 42,
                                        boot_ser);
    });
    r.match = bits_equal(boot_par, boot_ser);
    rows.push_back(r);
  }

  std::printf("%-30s %9s %12s %13s %8s %6s\n", "kernel", "n", "serial [ms]",
              "parallel [ms]", "speedup", "match");
  bool all_match = true;
  for (const BenchRow& r : rows) {
    std::printf("%-30s %9zu %12.3f %13.3f %8.2f %6s\n", r.name.c_str(), r.n,
                r.serial_ms, r.parallel_ms,
                r.parallel_ms > 0.0 ? r.serial_ms / r.parallel_ms : 0.0,
                r.match ? "yes" : "NO");
    all_match = all_match && r.match;
  }
  if (!all_match) {
    std::fprintf(stderr, "\nserial/parallel mismatch detected\n");
    return 1;
  }
  return 0;
}
