#include "emos/fit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace emos {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> vector_from_coefficients(const EmosCoefficients& c) {
  std::vector<double> v{c.alpha0, c.alpha1, c.alpha2, c.beta0, c.beta1};
  if (c.beta2) v.push_back(*c.beta2);
  v.push_back(c.xi);
  return v;
}

EmosCoefficients coefficients_from_vector(std::span<const double> v, bool has_beta2,
                                          Date day) {
  EmosCoefficients c;
  c.alpha0 = v[0];
  c.alpha1 = v[1];
  c.alpha2 = v[2];
  c.beta0 = v[3];
  c.beta1 = v[4];
  if (has_beta2) c.beta2 = v[5];
  c.xi = v[has_beta2 ? 6 : 5];
  c.valid_day = day;
  return c;
}

}  // namespace

bool EmosCoefficients::admissible() const {
  if (!(beta0 > 0.0)) return false;
  if (!(beta1 >= 0.0)) return false;
  if (beta2 && !(*beta2 >= 0.0)) return false;
  if (!(xi > kShapeMin && xi < kShapeMax)) return false;
  return true;
}

EmosCoefficients initial_coefficients(bool with_beta2) {
  EmosCoefficients c;
  c.alpha0 = 0.0;
  c.alpha1 = 1.0;
  c.alpha2 = -1.0;
  c.beta0 = 0.1;
  c.beta1 = 1.0;
  if (with_beta2) c.beta2 = 0.0;
  c.xi = 0.0;
  return c;
}

CensoredGevParams link_params(const EmosCoefficients& c, const PredictorSet& p) {
  CensoredGevParams out;
  out.m = c.alpha0 + c.alpha1 * p.mean + c.alpha2 * p.zero_frac;
  double sigma = c.beta0 + c.beta1 * p.md;
  if (c.beta2) {
    if (!p.nbr_md)
      throw std::invalid_argument(
          "link_params: beta2 is set but the predictor set has no neighborhood "
          "dispersion");
    sigma += *c.beta2 * *p.nbr_md;
  }
  out.sigma = sigma;
  out.xi = c.xi;
  return out;
}

CensoredGevParams predict(const EmosCoefficients& c, const PredictorSet& p) {
  if (!c.admissible()) throw std::domain_error("predict: inadmissible coefficients");
  return link_params(c, p);
}

void crps_loss_terms_serial(const EmosCoefficients& c,
                            std::span<const TrainingPair> pairs,
                            std::span<double> out) {
  if (out.size() != pairs.size())
    throw std::invalid_argument("crps_loss_terms: output size mismatch");
  for (std::size_t i = 0; i < pairs.size(); ++i)
    out[i] = crps_censored_gev(link_params(c, pairs[i].predictors),
                               pairs[i].observation);
}

void crps_loss_terms(const EmosCoefficients& c, std::span<const TrainingPair> pairs,
                     std::span<double> out) {
#ifdef _OPENMP
  if (out.size() != pairs.size())
    throw std::invalid_argument("crps_loss_terms: output size mismatch");
  const std::int64_t n = static_cast<std::int64_t>(pairs.size());
  std::exception_ptr err = nullptr;  // exceptions must not escape the omp region
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = crps_censored_gev(link_params(c, pairs[i].predictors),
                                 pairs[i].observation);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  crps_loss_terms_serial(c, pairs, out);
#endif
}

double objective(const EmosCoefficients& candidate, const TrainingWindow& window,
                 double last_admissible) {
  if (window.pairs.empty())
    throw std::invalid_argument("objective: empty training window");
  if (!candidate.admissible()) return 2.0 * last_admissible;
  thread_local std::vector<double> terms;
  terms.resize(window.pairs.size());
  crps_loss_terms(candidate, window.pairs, terms);
  double sum = 0.0;  // fixed-order reduction, independent of thread count
  for (double t : terms) sum += t;
  return sum / static_cast<double>(window.pairs.size());
}

MinimizeResult minimize_bfgs(const std::function<double(std::span<const double>)>& f,
                             std::vector<double> start, int max_iterations,
                             const BfgsOptions& opt) {
  const std::size_t n = start.size();
  std::vector<double> x = std::move(start);
  double fx = f(x);
  if (!std::isfinite(fx))
    throw std::invalid_argument("minimize_bfgs: objective not finite at start");
  MinimizeResult res;
  res.x = x;
  res.value = fx;
  if (max_iterations <= 0 || n == 0) return res;

  std::vector<double> xt(x);
  // Forward differences keep every probe on the admissible side of a lower
  // coefficient bound the iterate is sitting on (the neighborhood weight
  // starts exactly at zero), so the constraint penalty cannot contaminate
  // the gradient there and pin the search to the boundary.
  auto gradient = [&](const std::vector<double>& at, double f_at,
                      std::vector<double>& g) {
    xt = at;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = std::max(opt.grad_step, opt.grad_step * std::abs(at[i]));
      xt[i] = at[i] + h;
      const double fp = f(xt);
      xt[i] = at[i];
      g[i] = (fp - f_at) / h;
    }
  };

  std::vector<double> g(n), gn(n), p(n), xn(n), s(n), yv(n), hy(n);
  std::vector<double> H(n * n, 0.0);  // inverse-Hessian approximation
  for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
  gradient(x, fx, g);

  for (int it = 0; it < max_iterations; ++it) {
    double gmax = 0.0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax <= 1e-12) break;  // stationary

    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * g[j];
      p[i] = -acc;
    }
    double gtp = 0.0;
    for (std::size_t i = 0; i < n; ++i) gtp += g[i] * p[i];
    if (gtp >= 0.0) {  // lost positive definiteness: restart from steepest descent
      std::fill(H.begin(), H.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) H[i * n + i] = 1.0;
      gtp = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = -g[i];
        gtp -= g[i] * g[i];
      }
    }

    double step = 1.0;
    double fn = fx;
    bool accepted = false;
    for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = x[i] + step * p[i];
      fn = f(xn);
      if (std::isfinite(fn) && fn <= fx + opt.armijo_c * step * gtp) {
        accepted = true;
        break;
      }
      step *= opt.backtrack_shrink;
    }
    if (!accepted) break;

    gradient(xn, fn, gn);
    double ys = 0.0, yy = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = xn[i] - x[i];
      yv[i] = gn[i] - g[i];
      ys += yv[i] * s[i];
      yy += yv[i] * yv[i];
      ss += s[i] * s[i];
    }
    // Inverse BFGS update, skipped when curvature is too weak to be reliable.
    if (ys > 1e-12 * std::sqrt(yy * ss)) {
      const double r = 1.0 / ys;
      double yhy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += H[i * n + j] * yv[j];
        hy[i] = acc;
        yhy += yv[i] * acc;
      }
      const double b = r * r * yhy + r;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          H[i * n + j] += b * s[i] * s[j] - r * (s[i] * hy[j] + hy[i] * s[j]);
    }
    x = xn;
    g = gn;
    fx = fn;
    res.iterations = it + 1;
  }
  res.x = x;
  res.value = fx;
  return res;
}

DayFit fit_day(const EmosCoefficients& previous, const TrainingWindow& window,
               bool is_first_day, const FitConfig& cfg) {
  if (window.pairs.empty())
    throw std::invalid_argument("fit_day: no training pairs for " +
                                window.verification_day.to_string());
  if (!previous.admissible())
    throw std::invalid_argument("fit_day: inadmissible starting coefficients");
  const bool has_beta2 = previous.beta2.has_value();

  double last_admissible = objective(previous, window,
                                     std::numeric_limits<double>::infinity());
  auto f = [&](std::span<const double> theta) {
    const EmosCoefficients c =
        coefficients_from_vector(theta, has_beta2, window.verification_day);
    const double v = objective(c, window, last_admissible);
    if (c.admissible()) last_admissible = v;
    return v;
  };

  const int iters = is_first_day ? cfg.first_day_iterations : cfg.daily_iterations;
  MinimizeResult r = minimize_bfgs(f, vector_from_coefficients(previous), iters);

  DayFit out;
  out.coefficients = coefficients_from_vector(r.x, has_beta2, window.verification_day);
  out.objective_value = r.value;
  out.n_pairs = window.pairs.size();
  out.fitted = true;
  return out;
}

RollingFit rolling_fit(std::span<const TrainingWindow> windows, const FitConfig& cfg) {
  RollingFit out;
  EmosCoefficients state = initial_coefficients(cfg.neighborhood_model);
  bool first_fit_pending = true;
  bool have_prev = false;
  Date prev_day;

  for (const TrainingWindow& w : windows) {
    if (have_prev) {
      if (w.verification_day <= prev_day)
        throw std::invalid_argument("rolling_fit: verification days out of order at " +
                                    w.verification_day.to_string());
      if (w.verification_day - prev_day > 1)
        out.warnings.push_back("date gap of " +
                               std::to_string(w.verification_day - prev_day - 1) +
                               " day(s) before " + w.verification_day.to_string() +
                               "; fitting with available days");
    }
    prev_day = w.verification_day;
    have_prev = true;

    if (static_cast<int>(w.days.size()) < cfg.min_window_days || w.pairs.empty()) {
      DayFit d;
      d.coefficients = state;
      d.coefficients.valid_day = w.verification_day;
      d.n_pairs = w.pairs.size();
      d.objective_value =
          w.pairs.empty()
              ? kNaN
              : objective(state, w, std::numeric_limits<double>::infinity());
      d.fitted = false;
      out.days.push_back(std::move(d));
      out.warnings.push_back("window before " + w.verification_day.to_string() +
                             " covers " + std::to_string(w.days.size()) +
                             " day(s) (< " + std::to_string(cfg.min_window_days) +
                             "); previous coefficients carried forward");
      continue;
    }

    DayFit d = fit_day(state, w, first_fit_pending, cfg);
    first_fit_pending = false;
    state = d.coefficients;
    out.days.push_back(std::move(d));
  }
  return out;
}

}  // namespace emos
