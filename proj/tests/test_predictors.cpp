#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "emos/predictors.hpp"
#include "emos/rng.hpp"
#include "emos/synth.hpp"

namespace {

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

emos::EnsembleForecast make_forecast(std::vector<double> members) {
  emos::EnsembleForecast f;
  f.site_id = "S1";
  f.valid_time = emos::Date::from_ymd(2011, 6, 1);
  f.members = std::move(members);
  return f;
}

// Uniform toy grid on a km plane with unit climo factors.
emos::Grid make_grid(int nx, int ny, double spacing) {
  emos::Grid g;
  g.coord_system = emos::CoordSystem::XyKm;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      emos::GridPoint p;
      p.id = "G" + std::to_string(j * nx + i);
      p.coord_a = i * spacing;
      p.coord_b = j * spacing;
      g.points.push_back(p);
    }
  return g;
}

std::vector<double> random_field(emos::Rng& rng, int n_points, int n_members,
                                 double zero_prob = 0.25) {
  std::vector<double> v(static_cast<std::size_t>(n_points) * n_members);
  for (double& x : v)
    x = rng.uniform() < zero_prob ? 0.0 : 8.0 * rng.uniform();
  return v;
}

}  // namespace

TEST_CASE("ensemble_mean") {
  CHECK(emos::ensemble_mean(make_forecast({2, 2, 2})) == 2.0);
  CHECK(emos::ensemble_mean(make_forecast({0, 0, 1, 3})) == 1.0);
  CHECK(emos::ensemble_mean(make_forecast({5})) == 5.0);
  CHECK_THROWS_AS(emos::ensemble_mean(make_forecast({})), std::domain_error);
}

TEST_CASE("zero_fraction") {
  CHECK(emos::zero_fraction(make_forecast({0, 0, 1, 3}), 0.0) == 0.5);
  CHECK(emos::zero_fraction(make_forecast({1, 2, 3}), 0.0) == 0.0);
  CHECK(emos::zero_fraction(make_forecast({0.04, 0.2}), 0.05) == 0.5);
  CHECK_THROWS_AS(emos::zero_fraction(make_forecast({}), 0.0), std::domain_error);
}

TEST_CASE("gini_md basics") {
  CHECK(emos::gini_md(std::vector<double>{1, 1, 1, 1}) == 0.0);
  CHECK(emos::gini_md(std::vector<double>{0, 2}) == 1.0);
  CHECK(emos::gini_md(std::vector<double>{1, 2, 4}) ==
        doctest::Approx(12.0 / 9.0).epsilon(1e-15));
  CHECK(emos::gini_md(std::vector<double>{7}) == 0.0);

  // Explicit weights reproduce the equal-weight result.
  const std::vector<double> v{1, 2, 4};
  const std::vector<double> w{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(close_rel(emos::gini_md(v, w), 12.0 / 9.0, 1e-15));

  CHECK_THROWS_AS(emos::gini_md(std::vector<double>{}), std::domain_error);
  CHECK_THROWS_AS(emos::gini_md(v, std::vector<double>{0.5, -0.1, 0.6}),
                  std::domain_error);
  CHECK_THROWS_AS(emos::gini_md(v, std::vector<double>{0.5, 0.1, 0.1}),
                  std::domain_error);
  CHECK_THROWS_AS(emos::gini_md(v, std::vector<double>{0.5, 0.5}),
                  std::invalid_argument);
}

TEST_CASE("gini_md sorted identity equals the literal double sum") {
  emos::Rng rng(2024);
  for (int rep = 0; rep < 500; ++rep) {
    const int n = 1 + static_cast<int>(rng.below(50));
    std::vector<double> v(n), w(n);
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
      v[i] = -5.0 + 15.0 * rng.uniform();
      if (rng.uniform() < 0.2 && n > 1) v[i] = v[0];  // force ties
      w[i] = rng.uniform() + 1e-3;
      wsum += w[i];
    }
    for (double& x : w) x /= wsum;
    // Renormalise exactly enough for the validation gate.
    const bool weighted = rep % 3 != 0;
    const double got = weighted ? emos::gini_md(v, w) : emos::gini_md(v);
    const double want = weighted ? emos::md_double_sum_oracle(v, w)
                                 : emos::md_double_sum_oracle(v);
    CHECK(close_rel(got, want, 1e-12));
  }
}

TEST_CASE("local_predictors: permutation and scaling invariance") {
  emos::Rng rng(7);
  std::vector<double> members(16);
  for (double& m : members) m = rng.uniform() < 0.3 ? 0.0 : 5.0 * rng.uniform();

  const emos::PredictorSet base = emos::local_predictors(make_forecast(members), 0.0);
  CHECK(base.mean >= 0.0);
  CHECK(!base.nbr_md.has_value());

  std::vector<double> shuffled = members;
  for (std::size_t i = shuffled.size() - 1; i > 0; --i)
    std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
  const emos::PredictorSet perm =
      emos::local_predictors(make_forecast(shuffled), 0.0);
  CHECK(close_rel(perm.mean, base.mean, 1e-14));
  CHECK(perm.zero_frac == base.zero_frac);
  CHECK(close_rel(perm.md, base.md, 1e-14));

  // Doubling is exact in binary floating point.
  std::vector<double> doubled = members;
  for (double& m : doubled) m *= 2.0;
  const emos::PredictorSet two = emos::local_predictors(make_forecast(doubled), 0.0);
  CHECK(two.mean == 2.0 * base.mean);
  CHECK(two.md == 2.0 * base.md);
  CHECK(two.zero_frac == base.zero_frac);

  std::vector<double> scaled = members;
  for (double& m : scaled) m *= 1.7;
  const emos::PredictorSet sc = emos::local_predictors(make_forecast(scaled), 0.0);
  CHECK(close_rel(sc.mean, 1.7 * base.mean, 1e-14));
  CHECK(close_rel(sc.md, 1.7 * base.md, 1e-14));
  CHECK(sc.zero_frac == base.zero_frac);
}

TEST_CASE("distance_km") {
  CHECK(emos::distance_km(emos::CoordSystem::XyKm, 0, 0, 3, 4) == 5.0);
  // One degree of longitude on the equator: 2 pi R / 360 with R = 6371.0088.
  CHECK(close_rel(emos::distance_km(emos::CoordSystem::LonLat, 0, 0, 1, 0),
                  111.19508023353291, 1e-9));
  // Same point.
  CHECK(emos::distance_km(emos::CoordSystem::LonLat, 13.4, 52.5, 13.4, 52.5) == 0.0);
  // Symmetry.
  CHECK(emos::distance_km(emos::CoordSystem::LonLat, 7.1, 50.9, 13.4, 52.5) ==
        emos::distance_km(emos::CoordSystem::LonLat, 13.4, 52.5, 7.1, 50.9));
}

TEST_CASE("neighborhood_weights") {
  emos::Grid g = make_grid(3, 1, 10.0);  // points at x = 0, 10, 20

  const emos::NeighborhoodWeights solo = emos::neighborhood_weights(g, 0, 0, 5.0, "c");
  REQUIRE(solo.size() == 1);
  CHECK(solo.point_index[0] == 0);
  CHECK(solo.weight[0] == 1.0);

  // Radius exactly reaching a point excludes it (strict inequality).
  const emos::NeighborhoodWeights edge = emos::neighborhood_weights(g, 0, 0, 10.0, "c");
  CHECK(edge.size() == 1);

  // Distances 0 and r/2: raw weights 1 and 0.75 -> 4/7 and 3/7.
  const emos::NeighborhoodWeights two = emos::neighborhood_weights(g, 0, 0, 20.0, "c");
  REQUIRE(two.size() == 2);
  CHECK(two.weight[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
  CHECK(two.weight[1] == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  double sum = 0.0;
  for (double w : two.weight) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_WITH_AS(emos::neighborhood_weights(g, 100, 100, 5.0, "S42"),
                       doctest::Contains("S42"), std::runtime_error);
}

TEST_CASE("weighted_member_average") {
  emos::Grid g = make_grid(2, 1, 10.0);
  const emos::NeighborhoodWeights w = emos::neighborhood_weights(g, 0, 0, 20.0, "c");
  REQUIRE(w.size() == 2);

  const std::vector<double> constant{3.0, 3.0};  // one member per point
  emos::MemberField cf{constant, 2, 1};
  CHECK(emos::weighted_member_average(cf, w, 0) == doctest::Approx(3.0).epsilon(1e-15));

  const std::vector<double> vals{1.0, 8.0};
  emos::MemberField vf{vals, 2, 1};
  CHECK(emos::weighted_member_average(vf, w, 0) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("neighborhood_predictors degenerate cases") {
  emos::Grid g = make_grid(3, 3, 10.0);
  const int P = 9, K = 4;

  // Spatially and member-wise constant field.
  std::vector<double> constant(P * K, 2.5);
  emos::MemberField field{constant, P, K};
  const emos::NeighborhoodWeights w = emos::neighborhood_weights(g, 10, 10, 15.0, "c");
  CHECK(w.size() > 1);
  const emos::PredictorSet ps = emos::neighborhood_predictors(field, w, {}, 1.0, 0.0);
  CHECK(ps.mean == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(ps.zero_frac == 0.0);
  CHECK(ps.md == doctest::Approx(0.0).epsilon(1e-15));
  REQUIRE(ps.nbr_md.has_value());
  CHECK(*ps.nbr_md == doctest::Approx(0.0).epsilon(1e-15));

  // Single-gridpoint neighborhood reduces to the local statistics.
  emos::Rng rng(5);
  std::vector<double> vals = random_field(rng, P, K);
  emos::MemberField vf{vals, P, K};
  const emos::NeighborhoodWeights solo = emos::neighborhood_weights(g, 0, 0, 5.0, "c");
  const emos::PredictorSet nbr = emos::neighborhood_predictors(vf, solo, {}, 1.0, 0.0);
  emos::EnsembleForecast local = make_forecast({});
  for (int k = 0; k < K; ++k) local.members.push_back(vf.value(0, k));
  const emos::PredictorSet loc = emos::local_predictors(local, 0.0);
  CHECK(nbr.mean == loc.mean);
  CHECK(nbr.zero_frac == loc.zero_frac);
  CHECK(nbr.md == loc.md);
  REQUIRE(nbr.nbr_md.has_value());
  CHECK(*nbr.nbr_md == 0.0);
}

TEST_CASE("neighborhood_predictors equals the literal-sum oracle") {
  emos::Rng rng(31);
  emos::Grid g = make_grid(4, 4, 8.0);
  const int P = 16;
  for (int K : {1, 2, 5}) {
    std::vector<double> vals = random_field(rng, P, K);
    emos::MemberField field{vals, P, K};
    const emos::NeighborhoodWeights w =
        emos::neighborhood_weights(g, 8.0, 8.0, 17.0, "c");
    CHECK(w.size() >= 3);

    std::vector<double> climo(P);
    for (double& c : climo) c = 0.5 + 2.0 * rng.uniform();
    const double center_factor = climo[static_cast<std::size_t>(
        w.point_index[0])];

    for (double trace : {0.0, 0.4}) {
      const emos::PredictorSet got =
          emos::neighborhood_predictors(field, w, climo, center_factor, trace);
      const emos::PredictorSet want = emos::neighborhood_predictors_oracle(
          field, w, climo, center_factor, trace);
      CHECK(close_rel(got.mean, want.mean, 1e-13));
      CHECK(got.zero_frac == want.zero_frac);
      CHECK(close_rel(got.md, want.md, 1e-13));
      REQUIRE(got.nbr_md.has_value());
      CHECK(close_rel(*got.nbr_md, *want.nbr_md, 1e-13));

      const emos::PredictorSet got_plain =
          emos::neighborhood_predictors(field, w, {}, 1.0, trace);
      const emos::PredictorSet want_plain =
          emos::neighborhood_predictors_oracle(field, w, {}, 1.0, trace);
      CHECK(close_rel(got_plain.mean, want_plain.mean, 1e-13));
      CHECK(close_rel(got_plain.md, want_plain.md, 1e-13));
      CHECK(close_rel(*got_plain.nbr_md, *want_plain.nbr_md, 1e-13));
    }
  }
}

TEST_CASE("climo standardization") {
  emos::Rng rng(77);
  emos::Grid g = make_grid(3, 3, 10.0);
  const int P = 9, K = 6;
  std::vector<double> vals = random_field(rng, P, K);
  emos::MemberField field{vals, P, K};
  const emos::NeighborhoodWeights w = emos::neighborhood_weights(g, 10, 10, 15.0, "c");

  const emos::PredictorSet plain = emos::neighborhood_predictors(field, w, {}, 1.0, 0.0);

  // A spatially uniform power-of-two factor cancels bit-exactly.
  std::vector<double> uniform2(P, 2.0);
  const emos::PredictorSet u2 =
      emos::neighborhood_predictors(field, w, uniform2, 2.0, 0.0);
  CHECK(u2.mean == plain.mean);
  CHECK(u2.zero_frac == plain.zero_frac);
  CHECK(u2.md == plain.md);
  CHECK(*u2.nbr_md == *plain.nbr_md);

  // A general uniform factor cancels to rounding error.
  std::vector<double> uniform(P, 1.37);
  const emos::PredictorSet u =
      emos::neighborhood_predictors(field, w, uniform, 1.37, 0.0);
  CHECK(close_rel(u.mean, plain.mean, 1e-14));
  CHECK(u.zero_frac == plain.zero_frac);
  CHECK(close_rel(u.md, plain.md, 1e-14));
  CHECK(close_rel(*u.nbr_md, *plain.nbr_md, 1e-14));

  // The zero fraction counts raw values, not standardized ones: raw 0.04 is
  // under the 0.05 trace even though 0.04 / 0.5 = 0.08 is not.  All-dry sums
  // the normalized weights, so exact 1.0 is only reached up to rounding.
  std::vector<double> small(P * K, 0.04);
  emos::MemberField sf{small, P, K};
  std::vector<double> half(P, 0.5);
  const emos::PredictorSet zs = emos::neighborhood_predictors(sf, w, half, 0.5, 0.05);
  CHECK(zs.zero_frac == doctest::Approx(1.0).epsilon(1e-12));

  // Nonpositive factors are rejected.
  std::vector<double> bad(P, 1.0);
  bad[static_cast<std::size_t>(w.point_index[0])] = 0.0;
  CHECK_THROWS_AS(emos::neighborhood_predictors(field, w, bad, 1.0, 0.0),
                  std::runtime_error);
}

TEST_CASE("batch kernels match their serial twins bit for bit") {
  emos::Rng rng(123);
  emos::Grid g = make_grid(7, 7, 9.0);
  const int P = 49, K = 8;
  std::vector<double> vals = random_field(rng, P, K);
  emos::MemberField field{vals, P, K};

  std::vector<int> site_point;
  std::vector<emos::NeighborhoodWeights> weights;
  std::vector<double> center(12, 1.0);
  for (int s = 0; s < 12; ++s) {
    site_point.push_back(static_cast<int>(rng.below(P)));
    const emos::GridPoint& gp = g.points[static_cast<std::size_t>(site_point.back())];
    weights.push_back(
        emos::neighborhood_weights(g, gp.coord_a, gp.coord_b, 20.0, gp.id));
  }
  std::vector<double> climo(P);
  for (double& c : climo) c = 0.5 + 2.0 * rng.uniform();
  for (int s = 0; s < 12; ++s)
    center[static_cast<std::size_t>(s)] =
        climo[static_cast<std::size_t>(site_point[static_cast<std::size_t>(s)])];

  std::vector<emos::PredictorSet> a(12), b(12);
  emos::local_predictor_batch(field, site_point, 0.1, a);
  emos::local_predictor_batch_serial(field, site_point, 0.1, b);
  for (int s = 0; s < 12; ++s) {
    CHECK(a[s].mean == b[s].mean);
    CHECK(a[s].zero_frac == b[s].zero_frac);
    CHECK(a[s].md == b[s].md);
    CHECK(!a[s].nbr_md.has_value());
  }

  emos::neighborhood_predictor_batch(field, weights, climo, center, 0.0, a);
  emos::neighborhood_predictor_batch_serial(field, weights, climo, center, 0.0, b);
  for (int s = 0; s < 12; ++s) {
    CHECK(a[s].mean == b[s].mean);
    CHECK(a[s].zero_frac == b[s].zero_frac);
    CHECK(a[s].md == b[s].md);
    CHECK(*a[s].nbr_md == *b[s].nbr_md);
  }
}

TEST_CASE("batch kernels validate inputs before running") {
  emos::Grid g = make_grid(2, 2, 10.0);
  std::vector<double> vals(4 * 3, 1.0);
  emos::MemberField field{vals, 4, 3};
  std::vector<emos::PredictorSet> out(1);

  std::vector<int> bad_site{7};
  CHECK_THROWS_AS(emos::local_predictor_batch(field, bad_site, 0.0, out),
                  std::runtime_error);

  emos::NeighborhoodWeights w = emos::neighborhood_weights(g, 0, 0, 15.0, "c");
  std::vector<emos::NeighborhoodWeights> ws{w};
  std::vector<double> bad_climo(4, -1.0);
  std::vector<double> center{1.0};
  CHECK_THROWS_AS(
      emos::neighborhood_predictor_batch(field, ws, bad_climo, center, 0.0, out),
      std::runtime_error);

  emos::MemberField bad_field{vals, 4, 4};  // span size mismatch
  CHECK_THROWS_AS(emos::local_predictor_batch(bad_field, std::vector<int>{0}, 0.0, out),
                  std::invalid_argument);
}
