#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emos/dates.hpp"
#include "emos/gev.hpp"

namespace emos {

// Ensemble CRPS: mean |f - y| minus half the mean absolute member difference
// (all K^2 ordered pairs, self-pairs included).
double crps_ensemble(std::span<const double> members, double y);

double brier_score(double p, int occurred);

// 1 - score / reference; positive means the model beats the reference.
double skill_score(double mean_score, double mean_reference_score);

// Fraction of members strictly above the threshold.
double ensemble_threshold_prob(std::span<const double> members, double threshold);

// Two-sided paired t-test on day-aligned series (daily score sums); returns
// the p-value.  Identical series give p = 1; zero-variance nonzero
// differences are capped at p = 0.
double paired_ttest_daily(std::span<const double> daily_a,
                          std::span<const double> daily_b);

// Fixed 11-bin probability partition: [0,0.05), [0.05,0.15), ..., [0.85,0.95),
// [0.95,1].
inline constexpr int kReliabilityBins = 11;
int probability_bin(double p);

struct ReliabilityBin {
  int count = 0;
  double mean_prob = 0.0;  // NaN when the bin is empty
  double obs_freq = 0.0;   // NaN when the bin is empty
  double ci_low = 0.0;     // bootstrap CI on obs_freq, filled by verify_pairs
  double ci_high = 0.0;
};

struct ReliabilityDiagram {
  std::array<ReliabilityBin, kReliabilityBins> bins;
  std::size_t n = 0;
};

ReliabilityDiagram reliability_diagram(std::span<const double> probs,
                                       std::span<const int> occurred);

// Murphy partition of the Brier score plus within-bin-variance bias-corrected
// terms.  Both variants satisfy rel - res + unc = rel_bc - res_bc + unc_bc.
struct BrierDecomposition {
  double reliability = 0.0, resolution = 0.0, uncertainty = 0.0;
  double reliability_bc = 0.0, resolution_bc = 0.0, uncertainty_bc = 0.0;
};

BrierDecomposition brier_decomposition(const ReliabilityDiagram& d);

// Percentile interval for the mean of daily values under day-block
// resampling.  level_pct = 90 gives the central 90% interval; level 100
// degenerates to (min, max) over replicates.
std::pair<double, double> block_bootstrap_ci(std::span<const double> daily_values,
                                             int replicates, double level_pct,
                                             std::uint64_t seed);

// One verified forecast-observation pair with every score the report needs.
struct ScoredPair {
  Date day;
  std::string site;
  double observation = 0.0;
  double crps_model = 0.0;
  double crps_ens = 0.0;
  std::vector<double> p_model;  // per threshold
  std::vector<double> p_ens;
  std::vector<int> occurred;
};

// Scoring kernel over many pairs; member_rows is pair-major
// [i * n_members + k].  Fills the numeric fields of out (day/site are the
// caller's).  _serial is the reference implementation.
struct ScoreBatchInput {
  std::span<const CensoredGevParams> params;
  std::span<const double> observations;
  std::span<const double> member_rows;
  int n_members = 0;
  std::span<const double> thresholds;
};
void score_batch(const ScoreBatchInput& in, std::span<ScoredPair> out);
void score_batch_serial(const ScoreBatchInput& in, std::span<ScoredPair> out);

// Per-day sums from which every reported statistic can be recomputed; the
// unit of resampling for the bootstrap.
struct DayAggregates {
  Date day;
  std::size_t n = 0;
  double crps_model_sum = 0.0, crps_ens_sum = 0.0;
  std::vector<double> bs_model_sum, bs_ref_sum;              // [threshold]
  std::vector<double> bin_count, bin_prob_sum, bin_occ_sum;  // [threshold * 11 + bin]
};

std::vector<DayAggregates> aggregate_by_day(std::span<const ScoredPair> pairs,
                                            std::size_t n_thresholds);

// Replicate-row layout for the bootstrap matrix:
//   [0] mean model CRPS, [1] mean reference CRPS, [2] CRPSS,
// then per threshold t at offset 3 + 20 t:
//   +0 BS model, +1 BS reference, +2 BSS, +3..5 rel/res/unc,
//   +6..8 bias-corrected rel/res/unc, +9..19 per-bin observed frequency
// (NaN where a bin is empty in the replicate).
inline constexpr int kReplicateHeader = 3;
inline constexpr int kReplicateStride = 20;
std::size_t replicate_row_size(std::size_t n_thresholds);

// Fills out (replicates x row_size, row-major) with day-block resampled
// statistics.  Each replicate draws its own RNG substream from the seed, so
// results do not depend on thread count.  _serial is the reference.
void bootstrap_replicates(std::span<const DayAggregates> days,
                          std::size_t n_thresholds, int replicates,
                          std::uint64_t seed, std::span<double> out);
void bootstrap_replicates_serial(std::span<const DayAggregates> days,
                                 std::size_t n_thresholds, int replicates,
                                 std::uint64_t seed, std::span<double> out);

struct IntervalEstimate {
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct ThresholdReport {
  double threshold = 0.0;
  IntervalEstimate bs_model, bs_reference, bss;
  double p_value_bs = 1.0;  // paired t-test on daily BS sums vs reference
  ReliabilityDiagram diagram;
  IntervalEstimate reliability, resolution, uncertainty;
  IntervalEstimate reliability_bc, resolution_bc, uncertainty_bc;
};

struct BootstrapConfig {
  int replicates = 1000;
  double level_pct = 90.0;
  std::uint64_t seed = 0;
};

struct VerificationReport {
  std::size_t n_pairs = 0;
  std::size_t n_days = 0;
  IntervalEstimate crps_model, crps_reference, crpss;
  double p_value_crps = 1.0;  // paired t-test on daily CRPS sums vs reference
  std::vector<ThresholdReport> thresholds;
};

VerificationReport verify_pairs(std::span<const ScoredPair> pairs,
                                std::span<const double> thresholds,
                                const BootstrapConfig& bs);

}  // namespace emos
