#include "emos/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "emos/rng.hpp"

namespace emos {

namespace {

constexpr std::uint64_t kTagWaves = 0x57A6E5;
constexpr std::uint64_t kTagDailyAmp = 0xDA11F;
constexpr std::uint64_t kTagDisplace = 0xD15B;
constexpr std::uint64_t kTagMemberNoise = 0x4E015E;
constexpr std::uint64_t kTagObs = 0x0B5;
constexpr std::uint64_t kTagPit = 0xB17;

constexpr int kWaves = 64;

std::string padded_id(char prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%05d", prefix, i);
  return buf;
}

}  // namespace

EmosCoefficients default_scenario_truth() {
  EmosCoefficients c;
  c.alpha0 = 0.1;
  c.alpha1 = 0.9;
  c.alpha2 = -0.5;
  c.beta0 = 0.2;
  c.beta1 = 0.8;
  c.beta2.reset();
  c.xi = 0.2;
  return c;
}

Scenario generate_scenario(const ScenarioSpec& spec) {
  if (spec.n_days < 1 || spec.n_sites < 1 || spec.n_members < 1)
    throw std::invalid_argument("generate_scenario: days/sites/members must be >= 1");
  if (!(spec.spacing_km > 0.0) || !(spec.field_range_km > 0.0))
    throw std::invalid_argument("generate_scenario: spacing/range must be > 0");
  if (!(spec.obs_noise_scale > 0.0))
    throw std::invalid_argument("generate_scenario: obs_noise_scale must be > 0");
  if (!spec.truth.admissible())
    throw std::invalid_argument("generate_scenario: inadmissible true coefficients");
  if (spec.truth.beta2)
    throw std::invalid_argument(
        "generate_scenario: true coefficients must be the local variant (no beta2)");

  const int P = spec.n_sites;  // one station per gridpoint
  const int K = spec.n_members;
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(P))));

  Scenario sc;
  sc.truth = spec.truth;
  sc.grid.coord_system = CoordSystem::XyKm;
  sc.grid.has_climo = spec.climo_variation;
  std::vector<double> climo_raw(P, 1.0);
  for (int i = 0; i < P; ++i) {
    GridPoint gp;
    gp.id = padded_id('G', i);
    gp.coord_a = spec.spacing_km * static_cast<double>(i % side);
    gp.coord_b = spec.spacing_km * static_cast<double>(i / side);
    if (spec.climo_variation)
      climo_raw[i] = std::exp(0.35 * std::sin(gp.coord_a / 37.0) +
                              0.25 * std::cos(gp.coord_b / 23.0));
    sc.grid.points.push_back(std::move(gp));
  }
  if (spec.climo_variation) {
    // Normalise the published factors by their median, as an orographic
    // climatology would be.
    std::vector<double> sorted = climo_raw;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    const double median = sorted.size() % 2 == 1
                              ? sorted[mid]
                              : 0.5 * (sorted[mid - 1] + sorted[mid]);
    for (int i = 0; i < P; ++i) sc.grid.points[i].climo_factor = climo_raw[i] / median;
  }
  for (int i = 0; i < P; ++i) {
    Station s;
    s.id = padded_id('S', i);
    s.coord_a = sc.grid.points[i].coord_a;
    s.coord_b = sc.grid.points[i].coord_b;
    sc.stations.push_back(std::move(s));
  }

  // Fixed plane-wave basis; the daily Gaussian coefficients make the field a
  // stationary random field with pointwise std field_log_std.
  std::vector<double> wave_kx(kWaves), wave_ky(kWaves), wave_phase(kWaves);
  for (int j = 0; j < kWaves; ++j) {
    Rng rng(substream_seed(spec.seed, kTagWaves, static_cast<std::uint64_t>(j)));
    const double theta = rng.uniform() * 2.0 * std::numbers::pi;
    const double wavelength = spec.field_range_km * (0.5 + rng.uniform());
    const double kmag = 2.0 * std::numbers::pi / wavelength;
    wave_kx[j] = kmag * std::cos(theta);
    wave_ky[j] = kmag * std::sin(theta);
    wave_phase[j] = rng.uniform() * 2.0 * std::numbers::pi;
  }
  // cos/sin of the undisplaced phase per (point, wave).
  std::vector<double> cpsi(static_cast<std::size_t>(P) * kWaves);
  std::vector<double> spsi(static_cast<std::size_t>(P) * kWaves);
  for (int i = 0; i < P; ++i)
    for (int j = 0; j < kWaves; ++j) {
      const double psi = wave_kx[j] * sc.grid.points[i].coord_a +
                         wave_ky[j] * sc.grid.points[i].coord_b + wave_phase[j];
      cpsi[static_cast<std::size_t>(i) * kWaves + j] = std::cos(psi);
      spsi[static_cast<std::size_t>(i) * kWaves + j] = std::sin(psi);
    }

  const double amp = spec.field_log_std / std::sqrt(static_cast<double>(kWaves));
  const double noise_drift = -0.5 * spec.member_noise * spec.member_noise;

  sc.forecasts.n_members = K;
  sc.forecasts.records.reserve(static_cast<std::size_t>(spec.n_days) * P * K);
  sc.observations.records.reserve(static_cast<std::size_t>(spec.n_days) * P);

  std::vector<double> a(kWaves), b(kWaves), A(kWaves), B(kWaves);
  std::vector<double> emitted(static_cast<std::size_t>(P) * K);
  std::vector<double> reference(static_cast<std::size_t>(P) * K);

  for (int d = 0; d < spec.n_days; ++d) {
    const Date day = spec.start_day + d;
    for (int j = 0; j < kWaves; ++j) {
      Rng rng(substream_seed(spec.seed, kTagDailyAmp, static_cast<std::uint64_t>(d),
                             static_cast<std::uint64_t>(j)));
      a[j] = rng.normal();
      b[j] = rng.normal();
    }
    // One displacement per day, shared by all members: a position error of the
    // driving analysis shifts every member coherently.  (Independent member
    // shifts would average out of the ensemble mean and could not be offset by
    // neighborhood smoothing.)
    double dx = 0.0, dy = 0.0;
    if (spec.displacement_km > 0.0) {
      Rng rng(substream_seed(spec.seed, kTagDisplace, static_cast<std::uint64_t>(d)));
      dx = spec.displacement_km * rng.normal();
      dy = spec.displacement_km * rng.normal();
    }
    // g(x + delta) folds the shift into per-wave coefficients, leaving a
    // plain dot product per gridpoint.
    for (int j = 0; j < kWaves; ++j) {
      const double delta = wave_kx[j] * dx + wave_ky[j] * dy;
      const double cd = std::cos(delta);
      const double sd = std::sin(delta);
      A[j] = a[j] * cd + b[j] * sd;
      B[j] = b[j] * cd - a[j] * sd;
    }
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < P; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * kWaves;
        double sum_shifted = 0.0, sum_local = 0.0;
        for (int j = 0; j < kWaves; ++j) {
          sum_shifted += A[j] * cpsi[row + j] + B[j] * spsi[row + j];
          sum_local += a[j] * cpsi[row + j] + b[j] * spsi[row + j];
        }
        Rng nrng(substream_seed(spec.seed, kTagMemberNoise,
                                static_cast<std::uint64_t>(d),
                                (static_cast<std::uint64_t>(k) << 32) |
                                    static_cast<std::uint64_t>(i)));
        const double eta =
            std::exp(spec.member_noise * nrng.normal() + noise_drift);
        const double lam_shift =
            climo_raw[i] * std::exp(spec.field_log_mean + amp * sum_shifted);
        const double lam_local =
            climo_raw[i] * std::exp(spec.field_log_mean + amp * sum_local);
        emitted[static_cast<std::size_t>(i) * K + k] =
            std::max(0.0, lam_shift * eta - spec.dry_offset);
        reference[static_cast<std::size_t>(i) * K + k] =
            std::max(0.0, lam_local * eta - spec.dry_offset);
      }
    }
    for (int i = 0; i < P; ++i)
      for (int k = 0; k < K; ++k) {
        ForecastRecord r;
        r.valid_time = day;
        r.point_id = sc.grid.points[i].id;
        r.member = k + 1;
        r.value = emitted[static_cast<std::size_t>(i) * K + k];
        sc.forecasts.records.push_back(std::move(r));
      }
    // Observations come from the truth applied to the undisplaced ensemble.
    for (int i = 0; i < P; ++i) {
      EnsembleForecast ef;
      ef.members.assign(reference.begin() + static_cast<std::ptrdiff_t>(i) * K,
                        reference.begin() + static_cast<std::ptrdiff_t>(i + 1) * K);
      const PredictorSet p = local_predictors(ef, 0.0);
      CensoredGevParams gen;
      gen.m = spec.truth.alpha0 + spec.truth.alpha1 * p.mean +
              spec.truth.alpha2 * p.zero_frac;
      gen.sigma = spec.obs_noise_scale * (spec.truth.beta0 + spec.truth.beta1 * p.md);
      gen.xi = spec.truth.xi;
      Rng orng(substream_seed(spec.seed, kTagObs, static_cast<std::uint64_t>(d),
                              static_cast<std::uint64_t>(i)));
      ObservationRecord r;
      r.valid_time = day;
      r.station_id = sc.stations[i].id;
      r.value = censored_quantile(gen, orng.uniform_open());
      sc.observations.records.push_back(std::move(r));
    }
  }
  return sc;
}

std::vector<double> pit_histogram(std::span<const CensoredGevParams> predictions,
                                  std::span<const double> observations, int n_bins,
                                  std::uint64_t seed) {
  if (predictions.size() != observations.size())
    throw std::invalid_argument("pit_histogram: size mismatch");
  if (predictions.empty()) throw std::invalid_argument("pit_histogram: no pairs");
  if (n_bins < 1) throw std::invalid_argument("pit_histogram: need at least one bin");
  std::vector<double> freq(static_cast<std::size_t>(n_bins), 0.0);
  Rng rng(substream_seed(seed, kTagPit));
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double y = observations[i];
    if (!(y >= 0.0)) throw std::domain_error("pit_histogram: negative observation");
    const double pit = y > 0.0
                           ? censored_cdf(predictions[i], y)
                           : rng.uniform() * censored_cdf(predictions[i], 0.0);
    int bin = static_cast<int>(pit * n_bins);
    bin = std::clamp(bin, 0, n_bins - 1);
    freq[static_cast<std::size_t>(bin)] += 1.0;
  }
  for (double& v : freq) v /= static_cast<double>(predictions.size());
  return freq;
}

// ---- oracles ---------------------------------------------------------------

namespace {

// CDF written independently of the production path: native conversion via
// tgamma and the power form of the exponent.
double oracle_cdf(double mu, double sigma, double xi, double t) {
  const double z = (t - mu) / sigma;
  if (xi == 0.0) return std::exp(-std::exp(-z));
  const double w = 1.0 + xi * z;
  if (w <= 0.0) return xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::pow(w, -1.0 / xi));
}

template <typename F>
double adaptive_simpson(const F& f, double lo, double flo, double hi, double fhi,
                        double fmid, double whole, double tol, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double flm = f(0.5 * (lo + mid));
  const double frm = f(0.5 * (mid + hi));
  const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
  const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_simpson(f, lo, flo, mid, fmid, flm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, mid, fmid, hi, fhi, frm, right, 0.5 * tol, depth - 1);
}

template <typename F>
double integrate(const F& f, double lo, double hi, double tol) {
  if (!(hi > lo)) return 0.0;
  const double flo = f(lo);
  const double fhi = f(hi);
  const double fmid = f(0.5 * (lo + hi));
  const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  return adaptive_simpson(f, lo, flo, hi, fhi, fmid, whole, tol, 50);
}

}  // namespace

double crps_quadrature_oracle(const CensoredGevParams& p, double y) {
  p.validate();
  if (!(y >= 0.0)) throw std::domain_error("crps_quadrature_oracle: y must be >= 0");
  const double xi = p.xi;
  const double sigma = p.sigma;
  const double factor =
      xi == 0.0 ? std::numbers::egamma : (std::tgamma(1.0 - xi) - 1.0) / xi;
  const double mu = p.m - sigma * factor;
  const auto integrand = [&](double t) {
    const double g = oracle_cdf(mu, sigma, xi, t);
    const double d = t < y ? g : 1.0 - g;
    return d * d;
  };

  // For xi >= 0 the support is unbounded above; integrate a generous body
  // directly and fold the remaining tail onto [0, 1) with t = top + S s/(1-s).
  // The transformed tail integrand vanishes at s = 1 whenever xi < 1, so the
  // quadrature stays cheap even for very heavy tails.
  const bool bounded = xi < 0.0;
  const double top = bounded ? std::max(mu - sigma / xi, y)
                             : std::max({y, 1.0, mu + 10.0 * sigma});
  if (!(top > 0.0)) return 0.0;

  std::vector<double> pts = {0.0};
  const double lower_support = xi > 0.0 ? mu - sigma / xi : 0.0;
  if (lower_support > 0.0 && lower_support < top) pts.push_back(lower_support);
  if (bounded) {
    const double upper_support = mu - sigma / xi;
    if (upper_support > 0.0 && upper_support < top) pts.push_back(upper_support);
  }
  if (y > 0.0 && y < top) pts.push_back(y);
  pts.push_back(top);
  std::sort(pts.begin(), pts.end());

  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    total += integrate(integrand, pts[i - 1], pts[i], 1e-12);
  if (!bounded) {
    const double scale = std::max(sigma, 1.0);
    const auto tail = [&](double s) {
      if (s >= 1.0) return 0.0;
      const double om = 1.0 - s;
      const double t = top + scale * s / om;
      const double d = 1.0 - oracle_cdf(mu, sigma, xi, t);
      return d * d * scale / (om * om);
    };
    total += integrate(tail, 0.0, 1.0, 1e-12);
  }
  return total;
}

double md_double_sum_oracle(std::span<const double> values,
                            std::span<const double> weights) {
  const std::size_t n = values.size();
  if (n == 0) throw std::domain_error("md_double_sum_oracle: empty sample");
  double md = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double w =
          weights.empty() ? 1.0 / (static_cast<double>(n) * static_cast<double>(n))
                          : weights[i] * weights[j];
      md += w * std::abs(values[i] - values[j]);
    }
  return md;
}

PredictorSet neighborhood_predictors_oracle(const MemberField& field,
                                            const NeighborhoodWeights& w,
                                            std::span<const double> climo,
                                            double center_factor,
                                            double trace_threshold) {
  const int K = field.n_members;
  const std::size_t N = w.size();
  const bool standardized = !climo.empty();
  const double scale = standardized ? center_factor : 1.0;
  auto val = [&](std::size_t j, int k) {
    const int x = w.point_index[j];
    const double raw = field.value(x, k);
    return standardized ? raw / climo[x] : raw;
  };

  std::vector<double> favg(static_cast<std::size_t>(K), 0.0);
  for (int k = 0; k < K; ++k)
    for (std::size_t j = 0; j < N; ++j) favg[static_cast<std::size_t>(k)] += w.weight[j] * val(j, k);

  double mean = 0.0;
  for (double v : favg) mean += v;
  mean /= K;

  double zero_frac = 0.0;
  for (int k = 0; k < K; ++k)
    for (std::size_t j = 0; j < N; ++j)
      if (field.value(w.point_index[j], k) <= trace_threshold)
        zero_frac += w.weight[j];
  zero_frac /= K;

  const double md = md_double_sum_oracle(favg);

  double nbr = 0.0;
  std::vector<double> member_vals(N);
  for (int k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < N; ++j) member_vals[j] = val(j, k);
    nbr += md_double_sum_oracle(member_vals, w.weight);
  }
  nbr /= K;

  PredictorSet out;
  out.mean = scale * mean;
  out.zero_frac = zero_frac;
  out.md = scale * md;
  out.nbr_md = scale * nbr;
  return out;
}

}  // namespace emos
