#include "emos/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "emos/predictors.hpp"
#include "emos/rng.hpp"
#include "emos/special.hpp"

namespace emos {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kTagBootstrap = 0xB007;

// Type-7 quantile of an ascending sample.
double quantile_sorted(std::span<const double> v, double q) {
  if (v.empty()) return kNaN;
  if (v.size() == 1) return v[0];
  const double pos = q * static_cast<double>(v.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo >= v.size() - 1) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

struct DecompTerms {
  double rel = 0.0, res = 0.0, unc = 0.0;
  double rel_bc = 0.0, res_bc = 0.0, unc_bc = 0.0;
};

// Murphy terms from per-bin counts and sums, plus the within-bin-variance
// bias correction.  Built so that rel - res + unc is preserved exactly by
// the corrected terms.
DecompTerms decomposition_from_bins(std::span<const double> n_k,
                                    std::span<const double> p_sum,
                                    std::span<const double> o_sum) {
  double n = 0.0, o_total = 0.0;
  for (int k = 0; k < kReliabilityBins; ++k) {
    n += n_k[k];
    o_total += o_sum[k];
  }
  DecompTerms t;
  if (n <= 0.0) {
    t.rel = t.res = t.unc = t.rel_bc = t.res_bc = t.unc_bc = kNaN;
    return t;
  }
  const double obar = o_total / n;
  double rel = 0.0, res = 0.0, corr = 0.0;
  for (int k = 0; k < kReliabilityBins; ++k) {
    if (n_k[k] <= 0.0) continue;
    const double pbar = p_sum[k] / n_k[k];
    const double ok = o_sum[k] / n_k[k];
    rel += n_k[k] * (pbar - ok) * (pbar - ok);
    res += n_k[k] * (ok - obar) * (ok - obar);
    if (n_k[k] > 1.0) corr += n_k[k] * ok * (1.0 - ok) / (n_k[k] - 1.0);
  }
  t.rel = rel / n;
  t.res = res / n;
  t.unc = obar * (1.0 - obar);
  if (n > 1.0) {
    const double c = corr / n;
    t.rel_bc = t.rel - c;
    t.res_bc = t.res - c + obar * (1.0 - obar) / (n - 1.0);
    t.unc_bc = t.unc * n / (n - 1.0);
  } else {
    t.rel_bc = t.rel;
    t.res_bc = t.res;
    t.unc_bc = t.unc;
  }
  return t;
}

// One replicate row from a selection of day indices.  Scratch buffers are
// caller-owned so the bootstrap loop stays allocation-free.
struct ReplicateScratch {
  std::vector<double> nk, ps, os, bsm, bsr;
};

void replicate_from_selection(std::span<const DayAggregates> days,
                              std::span<const std::size_t> sel, std::size_t T,
                              std::span<double> row, ReplicateScratch& sc) {
  sc.nk.assign(T * kReliabilityBins, 0.0);
  sc.ps.assign(T * kReliabilityBins, 0.0);
  sc.os.assign(T * kReliabilityBins, 0.0);
  sc.bsm.assign(T, 0.0);
  sc.bsr.assign(T, 0.0);
  double n = 0.0, cm = 0.0, ce = 0.0;
  for (std::size_t idx : sel) {
    const DayAggregates& d = days[idx];
    n += static_cast<double>(d.n);
    cm += d.crps_model_sum;
    ce += d.crps_ens_sum;
    for (std::size_t t = 0; t < T; ++t) {
      sc.bsm[t] += d.bs_model_sum[t];
      sc.bsr[t] += d.bs_ref_sum[t];
    }
    for (std::size_t j = 0; j < T * kReliabilityBins; ++j) {
      sc.nk[j] += d.bin_count[j];
      sc.ps[j] += d.bin_prob_sum[j];
      sc.os[j] += d.bin_occ_sum[j];
    }
  }
  row[0] = cm / n;
  row[1] = ce / n;
  row[2] = ce > 0.0 ? 1.0 - cm / ce : kNaN;
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t base = kReplicateHeader + kReplicateStride * t;
    row[base + 0] = sc.bsm[t] / n;
    row[base + 1] = sc.bsr[t] / n;
    row[base + 2] = sc.bsr[t] > 0.0 ? 1.0 - sc.bsm[t] / sc.bsr[t] : kNaN;
    const std::size_t b0 = t * kReliabilityBins;
    const DecompTerms dt = decomposition_from_bins(
        std::span(sc.nk).subspan(b0, kReliabilityBins),
        std::span(sc.ps).subspan(b0, kReliabilityBins),
        std::span(sc.os).subspan(b0, kReliabilityBins));
    row[base + 3] = dt.rel;
    row[base + 4] = dt.res;
    row[base + 5] = dt.unc;
    row[base + 6] = dt.rel_bc;
    row[base + 7] = dt.res_bc;
    row[base + 8] = dt.unc_bc;
    for (int b = 0; b < kReliabilityBins; ++b)
      row[base + 9 + b] =
          sc.nk[b0 + b] > 0.0 ? sc.os[b0 + b] / sc.nk[b0 + b] : kNaN;
  }
}

void check_bootstrap_args(std::span<const DayAggregates> days, std::size_t T,
                          int replicates, std::span<double> out) {
  if (days.empty()) throw std::invalid_argument("bootstrap: no days");
  if (replicates <= 0) throw std::invalid_argument("bootstrap: replicates must be > 0");
  if (out.size() != static_cast<std::size_t>(replicates) * replicate_row_size(T))
    throw std::invalid_argument("bootstrap: output size mismatch");
  for (const DayAggregates& d : days)
    if (d.bs_model_sum.size() != T || d.bs_ref_sum.size() != T ||
        d.bin_count.size() != T * kReliabilityBins)
      throw std::invalid_argument("bootstrap: day aggregate shape mismatch");
}

void score_one(const ScoreBatchInput& in, std::size_t i, ScoredPair& sp) {
  const std::size_t K = static_cast<std::size_t>(in.n_members);
  const std::span<const double> members = in.member_rows.subspan(i * K, K);
  const double y = in.observations[i];
  sp.observation = y;
  sp.crps_model = crps_censored_gev(in.params[i], y);
  sp.crps_ens = crps_ensemble(members, y);
  const std::size_t T = in.thresholds.size();
  sp.p_model.resize(T);
  sp.p_ens.resize(T);
  sp.occurred.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    sp.p_model[t] = 1.0 - censored_cdf(in.params[i], in.thresholds[t]);
    sp.p_ens[t] = ensemble_threshold_prob(members, in.thresholds[t]);
    sp.occurred[t] = y > in.thresholds[t] ? 1 : 0;
  }
}

void check_score_batch(const ScoreBatchInput& in, std::span<ScoredPair> out) {
  const std::size_t N = in.params.size();
  if (in.observations.size() != N || out.size() != N)
    throw std::invalid_argument("score_batch: input size mismatch");
  if (in.n_members <= 0 ||
      in.member_rows.size() != N * static_cast<std::size_t>(in.n_members))
    throw std::invalid_argument("score_batch: member row size mismatch");
  for (const CensoredGevParams& p : in.params) p.validate();
  for (double y : in.observations)
    if (!(y >= 0.0)) throw std::domain_error("score_batch: negative observation");
}

}  // namespace

double crps_ensemble(std::span<const double> members, double y) {
  if (members.empty()) throw std::domain_error("crps_ensemble: empty ensemble");
  double mad = 0.0;
  for (double f : members) mad += std::abs(f - y);
  mad /= static_cast<double>(members.size());
  return mad - 0.5 * gini_md(members);
}

double brier_score(double p, int occurred) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("brier_score: probability outside [0,1]");
  if (occurred != 0 && occurred != 1)
    throw std::domain_error("brier_score: outcome must be 0 or 1");
  const double d = p - occurred;
  return d * d;
}

double skill_score(double mean_score, double mean_reference_score) {
  if (mean_reference_score == 0.0)
    throw std::domain_error("skill_score: zero reference score");
  return 1.0 - mean_score / mean_reference_score;
}

double ensemble_threshold_prob(std::span<const double> members, double threshold) {
  if (members.empty())
    throw std::domain_error("ensemble_threshold_prob: empty ensemble");
  double c = 0.0;
  for (double f : members)
    if (f > threshold) c += 1.0;
  return c / static_cast<double>(members.size());
}

double paired_ttest_daily(std::span<const double> daily_a,
                          std::span<const double> daily_b) {
  if (daily_a.size() != daily_b.size())
    throw std::invalid_argument("paired_ttest_daily: series length mismatch");
  const std::size_t n = daily_a.size();
  if (n < 2) throw std::invalid_argument("paired_ttest_daily: need at least 2 days");
  double mean = 0.0;
  bool all_zero = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = daily_a[i] - daily_b[i];
    mean += d;
    if (d != 0.0) all_zero = false;
  }
  if (all_zero) return 1.0;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (daily_a[i] - daily_b[i]) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0.0) return 0.0;  // constant nonzero difference
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const double nu = static_cast<double>(n - 1);
  return regularized_incomplete_beta(0.5 * nu, 0.5, nu / (nu + t * t));
}

int probability_bin(double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::domain_error("probability_bin: probability outside [0,1]");
  static constexpr double kEdges[] = {0.05, 0.15, 0.25, 0.35, 0.45,
                                      0.55, 0.65, 0.75, 0.85, 0.95};
  int bin = 0;
  while (bin < kReliabilityBins - 1 && p >= kEdges[bin]) ++bin;
  return bin;
}

ReliabilityDiagram reliability_diagram(std::span<const double> probs,
                                       std::span<const int> occurred) {
  if (probs.size() != occurred.size())
    throw std::invalid_argument("reliability_diagram: size mismatch");
  if (probs.empty()) throw std::invalid_argument("reliability_diagram: no pairs");
  std::array<double, kReliabilityBins> nk{}, ps{}, os{};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (occurred[i] != 0 && occurred[i] != 1)
      throw std::domain_error("reliability_diagram: outcome must be 0 or 1");
    const int b = probability_bin(probs[i]);
    nk[b] += 1.0;
    ps[b] += probs[i];
    os[b] += occurred[i];
  }
  ReliabilityDiagram d;
  d.n = probs.size();
  for (int b = 0; b < kReliabilityBins; ++b) {
    ReliabilityBin& rb = d.bins[b];
    rb.count = static_cast<int>(nk[b]);
    rb.mean_prob = nk[b] > 0.0 ? ps[b] / nk[b] : kNaN;
    rb.obs_freq = nk[b] > 0.0 ? os[b] / nk[b] : kNaN;
    rb.ci_low = kNaN;
    rb.ci_high = kNaN;
  }
  return d;
}

BrierDecomposition brier_decomposition(const ReliabilityDiagram& d) {
  std::array<double, kReliabilityBins> nk{}, ps{}, os{};
  for (int b = 0; b < kReliabilityBins; ++b) {
    const ReliabilityBin& rb = d.bins[b];
    if (rb.count <= 0) continue;
    nk[b] = rb.count;
    ps[b] = rb.mean_prob * rb.count;
    os[b] = rb.obs_freq * rb.count;
  }
  const DecompTerms t = decomposition_from_bins(nk, ps, os);
  BrierDecomposition out;
  out.reliability = t.rel;
  out.resolution = t.res;
  out.uncertainty = t.unc;
  out.reliability_bc = t.rel_bc;
  out.resolution_bc = t.res_bc;
  out.uncertainty_bc = t.unc_bc;
  return out;
}

std::pair<double, double> block_bootstrap_ci(std::span<const double> daily_values,
                                             int replicates, double level_pct,
                                             std::uint64_t seed) {
  const std::size_t n = daily_values.size();
  if (n < 2)
    throw std::invalid_argument("block_bootstrap_ci: need at least 2 daily values");
  if (replicates <= 0)
    throw std::invalid_argument("block_bootstrap_ci: replicates must be > 0");
  if (!(level_pct > 0.0 && level_pct <= 100.0))
    throw std::invalid_argument("block_bootstrap_ci: level must lie in (0,100]");
  std::vector<double> means(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    Rng rng(substream_seed(seed, kTagBootstrap, static_cast<std::uint64_t>(r)));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += daily_values[rng.below(n)];
    means[static_cast<std::size_t>(r)] = s / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const double alpha = (100.0 - level_pct) / 200.0;
  return {quantile_sorted(means, alpha), quantile_sorted(means, 1.0 - alpha)};
}

void score_batch_serial(const ScoreBatchInput& in, std::span<ScoredPair> out) {
  check_score_batch(in, out);
  for (std::size_t i = 0; i < out.size(); ++i) score_one(in, i, out[i]);
}

void score_batch(const ScoreBatchInput& in, std::span<ScoredPair> out) {
#ifdef _OPENMP
  check_score_batch(in, out);
  const std::int64_t n = static_cast<std::int64_t>(out.size());
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      score_one(in, static_cast<std::size_t>(i), out[i]);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  score_batch_serial(in, out);
#endif
}

std::vector<DayAggregates> aggregate_by_day(std::span<const ScoredPair> pairs,
                                            std::size_t n_thresholds) {
  std::vector<DayAggregates> days;
  for (const ScoredPair& sp : pairs) {
    if (sp.p_model.size() != n_thresholds || sp.p_ens.size() != n_thresholds ||
        sp.occurred.size() != n_thresholds)
      throw std::invalid_argument("aggregate_by_day: threshold count mismatch");
    auto it = std::lower_bound(days.begin(), days.end(), sp.day,
                               [](const DayAggregates& d, Date v) { return d.day < v; });
    if (it == days.end() || it->day != sp.day) {
      DayAggregates d;
      d.day = sp.day;
      d.bs_model_sum.assign(n_thresholds, 0.0);
      d.bs_ref_sum.assign(n_thresholds, 0.0);
      d.bin_count.assign(n_thresholds * kReliabilityBins, 0.0);
      d.bin_prob_sum.assign(n_thresholds * kReliabilityBins, 0.0);
      d.bin_occ_sum.assign(n_thresholds * kReliabilityBins, 0.0);
      it = days.insert(it, std::move(d));
    }
    DayAggregates& d = *it;
    d.n += 1;
    d.crps_model_sum += sp.crps_model;
    d.crps_ens_sum += sp.crps_ens;
    for (std::size_t t = 0; t < n_thresholds; ++t) {
      d.bs_model_sum[t] += brier_score(sp.p_model[t], sp.occurred[t]);
      d.bs_ref_sum[t] += brier_score(sp.p_ens[t], sp.occurred[t]);
      const std::size_t j = t * kReliabilityBins +
                            static_cast<std::size_t>(probability_bin(sp.p_model[t]));
      d.bin_count[j] += 1.0;
      d.bin_prob_sum[j] += sp.p_model[t];
      d.bin_occ_sum[j] += sp.occurred[t];
    }
  }
  return days;
}

std::size_t replicate_row_size(std::size_t n_thresholds) {
  return kReplicateHeader + kReplicateStride * n_thresholds;
}

void bootstrap_replicates_serial(std::span<const DayAggregates> days,
                                 std::size_t n_thresholds, int replicates,
                                 std::uint64_t seed, std::span<double> out) {
  check_bootstrap_args(days, n_thresholds, replicates, out);
  const std::size_t row_size = replicate_row_size(n_thresholds);
  const std::size_t n_days = days.size();
  ReplicateScratch sc;
  std::vector<std::size_t> sel(n_days);
  for (int r = 0; r < replicates; ++r) {
    Rng rng(substream_seed(seed, kTagBootstrap, static_cast<std::uint64_t>(r)));
    for (std::size_t i = 0; i < n_days; ++i) sel[i] = rng.below(n_days);
    replicate_from_selection(days, sel, n_thresholds,
                             out.subspan(static_cast<std::size_t>(r) * row_size,
                                         row_size),
                             sc);
  }
}

void bootstrap_replicates(std::span<const DayAggregates> days,
                          std::size_t n_thresholds, int replicates,
                          std::uint64_t seed, std::span<double> out) {
#ifdef _OPENMP
  check_bootstrap_args(days, n_thresholds, replicates, out);
  const std::size_t row_size = replicate_row_size(n_thresholds);
  const std::size_t n_days = days.size();
  std::exception_ptr err = nullptr;
#pragma omp parallel
  {
    ReplicateScratch sc;
    std::vector<std::size_t> sel(n_days);
#pragma omp for schedule(static)
    for (int r = 0; r < replicates; ++r) {
      try {
        Rng rng(substream_seed(seed, kTagBootstrap, static_cast<std::uint64_t>(r)));
        for (std::size_t i = 0; i < n_days; ++i) sel[i] = rng.below(n_days);
        replicate_from_selection(days, sel, n_thresholds,
                                 out.subspan(static_cast<std::size_t>(r) * row_size,
                                             row_size),
                                 sc);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
#else
  bootstrap_replicates_serial(days, n_thresholds, replicates, seed, out);
#endif
}

VerificationReport verify_pairs(std::span<const ScoredPair> pairs,
                                std::span<const double> thresholds,
                                const BootstrapConfig& bs) {
  if (pairs.empty()) throw std::invalid_argument("verify_pairs: no scored pairs");
  if (!(bs.level_pct > 0.0 && bs.level_pct <= 100.0))
    throw std::invalid_argument("verify_pairs: bootstrap level must lie in (0,100]");
  const std::size_t T = thresholds.size();
  const std::vector<DayAggregates> days = aggregate_by_day(pairs, T);
  const std::size_t row_size = replicate_row_size(T);

  // Point estimates come from the identity selection, so they share code with
  // the replicates by construction.
  std::vector<std::size_t> identity(days.size());
  for (std::size_t i = 0; i < days.size(); ++i) identity[i] = i;
  std::vector<double> point(row_size);
  ReplicateScratch sc;
  replicate_from_selection(days, identity, T, point, sc);
  const std::vector<double> full_nk = sc.nk, full_ps = sc.ps, full_os = sc.os;

  std::vector<double> mat(static_cast<std::size_t>(bs.replicates) * row_size);
  bootstrap_replicates(days, T, bs.replicates, bs.seed, mat);

  const double alpha = (100.0 - bs.level_pct) / 200.0;
  std::vector<double> col;
  auto interval = [&](std::size_t c) {
    col.clear();
    for (int r = 0; r < bs.replicates; ++r) {
      const double v = mat[static_cast<std::size_t>(r) * row_size + c];
      if (std::isfinite(v)) col.push_back(v);
    }
    std::sort(col.begin(), col.end());
    IntervalEstimate e;
    e.value = point[c];
    e.ci_low = quantile_sorted(col, alpha);
    e.ci_high = quantile_sorted(col, 1.0 - alpha);
    return e;
  };

  VerificationReport rep;
  rep.n_pairs = pairs.size();
  rep.n_days = days.size();
  rep.crps_model = interval(0);
  rep.crps_reference = interval(1);
  rep.crpss = interval(2);

  if (days.size() >= 2) {
    std::vector<double> da(days.size()), db(days.size());
    for (std::size_t i = 0; i < days.size(); ++i) {
      da[i] = days[i].crps_model_sum;
      db[i] = days[i].crps_ens_sum;
    }
    rep.p_value_crps = paired_ttest_daily(da, db);
  } else {
    rep.p_value_crps = kNaN;
  }

  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t base = kReplicateHeader + kReplicateStride * t;
    ThresholdReport tr;
    tr.threshold = thresholds[t];
    tr.bs_model = interval(base + 0);
    tr.bs_reference = interval(base + 1);
    tr.bss = interval(base + 2);
    if (days.size() >= 2) {
      std::vector<double> da(days.size()), db(days.size());
      for (std::size_t i = 0; i < days.size(); ++i) {
        da[i] = days[i].bs_model_sum[t];
        db[i] = days[i].bs_ref_sum[t];
      }
      tr.p_value_bs = paired_ttest_daily(da, db);
    } else {
      tr.p_value_bs = kNaN;
    }
    tr.reliability = interval(base + 3);
    tr.resolution = interval(base + 4);
    tr.uncertainty = interval(base + 5);
    tr.reliability_bc = interval(base + 6);
    tr.resolution_bc = interval(base + 7);
    tr.uncertainty_bc = interval(base + 8);

    tr.diagram.n = pairs.size();
    const std::size_t b0 = t * kReliabilityBins;
    for (int b = 0; b < kReliabilityBins; ++b) {
      ReliabilityBin& rb = tr.diagram.bins[b];
      const double nk = full_nk[b0 + b];
      rb.count = static_cast<int>(nk);
      rb.mean_prob = nk > 0.0 ? full_ps[b0 + b] / nk : kNaN;
      rb.obs_freq = nk > 0.0 ? full_os[b0 + b] / nk : kNaN;
      const IntervalEstimate ci = interval(base + 9 + static_cast<std::size_t>(b));
      rb.ci_low = ci.ci_low;
      rb.ci_high = ci.ci_high;
    }
    rep.thresholds.push_back(std::move(tr));
  }
  return rep;
}

}  // namespace emos
