#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "rcm/heavy_tails.hpp"
#include "rcm/stats.hpp"

using namespace rcm;

namespace {

// Levy law with our normalization: CDF erfc(sqrt(pi / (4 x))).
double levy_cdf(double x) { return boost::math::erfc(std::sqrt(std::numbers::pi / (4.0 * x))); }

// Leading terms of the tail series P(S > x) for large x.
double tail_series(double alpha, double x, int terms) {
  const double g = boost::math::tgamma(1.0 - alpha);
  double sum = 0.0;
  for (int k = 1; k <= terms; ++k) {
    const double sign = (k % 2 == 1) ? 1.0 : -1.0;
    sum += sign / boost::math::factorial<double>(k) * boost::math::tgamma(k * alpha) *
           std::sin(k * std::numbers::pi * alpha) * std::pow(g, k) * std::pow(x, -k * alpha);
  }
  return sum / std::numbers::pi;
}

}  // namespace

TEST_CASE("pareto quantile") {
  CHECK(pareto_quantile(0.25, 0.5) == doctest::Approx(16.0));
  CHECK(pareto_quantile(1.0, 0.7) == 1.0);
  CHECK(pareto_quantile(0.01, 0.5) == doctest::Approx(10000.0));
  CHECK_THROWS(pareto_quantile(0.0, 0.5));
  CHECK_THROWS(pareto_quantile(1.5, 0.5));
  CHECK_THROWS(pareto_quantile(0.5, 1.0));
  CHECK_THROWS(pareto_quantile(0.5, 0.0));
}

TEST_CASE("quantile and survival round trip") {
  const ModelParams params = ModelParams::walls(0.6);
  for (double lu = -12.0; lu <= 0.0; lu += 0.5) {
    const double u = std::pow(10.0, lu);
    const double t = pareto_quantile(u, params.alpha0);
    CHECK(resistance_survival(params, t) == doctest::Approx(u).epsilon(1e-12));
  }
}

TEST_CASE("model params validation") {
  CHECK_THROWS(ModelParams::walls(1.2));
  CHECK_THROWS(ModelParams::walls_and_traps(0.5, 1.0, 0.5));
  CHECK_THROWS(ModelParams::walls_and_traps(0.5, 0.5, 0.0));
  ModelParams p;
  p.mode = Mode::RWT;
  CHECK_THROWS(p.validate());
  CHECK(mode_from_string("RWT") == Mode::RWT);
  CHECK_THROWS(mode_from_string("walls"));
}

TEST_CASE("edge law") {
  Stream rng(7);
  const ModelParams rw = ModelParams::walls(0.5);
  for (int i = 0; i < 10000; ++i) {
    const EdgeDraw e = sample_edge_law(rw, rng);
    CHECK(e.c <= 1.0);
    CHECK(e.c * e.r == doctest::Approx(1.0).epsilon(1e-15));
  }
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.5);
  const int draws = 1000000;
  int above4 = 0, atleast1 = 0;
  for (int i = 0; i < draws; ++i) {
    const EdgeDraw e = sample_edge_law(rwt, rng);
    above4 += e.c > 4.0;
    atleast1 += e.c >= 1.0;
  }
  const double sd4 = std::sqrt(0.25 * 0.75 / draws);
  const double sd1 = std::sqrt(0.25 / draws);
  CHECK(std::abs(above4 / double(draws) - 0.25) < 3 * sd4);
  CHECK(std::abs(atleast1 / double(draws) - 0.5) < 3 * sd1);
}

TEST_CASE("scaling terms") {
  const ScaleSet a = scaling_terms(ModelParams::walls(0.5), 100);
  CHECK(a.d_n0 == doctest::Approx(1e4));
  CHECK(a.a_n == doctest::Approx(1e6));
  CHECK(std::isnan(a.b_n));
  const ScaleSet b = scaling_terms(ModelParams::walls_and_traps(0.8, 0.5, 0.5), 200);
  CHECK(b.d_ninf == doctest::Approx(1e4));
  CHECK(b.b_n == doctest::Approx(1e4 * std::pow(100.0, 1.0 / 0.8)));
  CHECK(b.d_star_ninf / b.d_ninf == doctest::Approx(std::pow(0.5, -1.0 / 0.5)));
  CHECK_THROWS(scaling_terms(ModelParams::walls(0.5), 0));

  // overflow: the double saturates, the log stays finite
  const ScaleSet big = scaling_terms(ModelParams::walls(0.01), 1000000);
  CHECK(std::isinf(big.d_n0));
  CHECK(big.log_d_n0 == doctest::Approx(std::log(1e6) / 0.01));

  // n small enough that (1 - p) n < 1 uses the exact inversion
  const ModelParams rwt = ModelParams::walls_and_traps(0.5, 0.5, 0.9);
  const ScaleSet small = scaling_terms(rwt, 5);
  CHECK(resistance_survival(rwt, small.d_n0) <= 0.2 + 1e-12);
  CHECK(resistance_survival(rwt, small.d_n0 * (1 - 1e-9)) > 0.2 - 1e-9);
}

TEST_CASE("empirical scale agrees with the closed form") {
  Stream rng(3);
  const ModelParams rw = ModelParams::walls(0.5);
  CustomEdgeLaw law{[&](Stream& s) { return sample_edge_law(rw, s); }};
  const double d = empirical_scale(law, 100, true, 2000000, rng);
  CHECK(d == doctest::Approx(1e4).epsilon(0.05));
}

TEST_CASE("stable marginal against the erfc closed form") {
  CHECK(stable_marginal_cdf(0.5, std::numbers::pi / 4.0) ==
        doctest::Approx(boost::math::erfc(1.0)).epsilon(1e-6));
  for (double x : {0.1, 0.5, 1.0, 5.0, 20.0}) {
    CHECK(std::abs(stable_marginal_cdf(0.5, x) - levy_cdf(x)) < 1e-6);
    CHECK(std::abs(stable_marginal_survival(0.5, x) - (1.0 - levy_cdf(x))) < 1e-6);
  }
  CHECK(stable_marginal_cdf(0.5, 1e12) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(stable_marginal_cdf(0.5, 1e-6) < 1e-10);
  CHECK_THROWS(stable_marginal_cdf(0.5, 0.0));
  CHECK_THROWS(stable_marginal_cdf(0.5, -1.0));
}

TEST_CASE("stable marginal monotone with consistent tails") {
  for (double alpha : {0.3, 0.7, 0.8}) {
    double prev = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double x = std::pow(10.0, -2.0 + 5.0 * i / 99.0);
      const double f = stable_marginal_cdf(alpha, x);
      CHECK(f >= prev - 1e-12);
      CHECK(f + stable_marginal_survival(alpha, x) == doctest::Approx(1.0).epsilon(1e-9));
      prev = f;
    }
    // far tail: relative agreement with the asymptotic series
    for (double x : {1e4, 1e6, 1e8}) {
      const double s = stable_marginal_survival(alpha, x);
      CHECK(s == doctest::Approx(tail_series(alpha, x, 6)).epsilon(1e-6));
    }
  }
}

TEST_CASE("subordinator counts, drift and anchoring") {
  CHECK(compensation_rate(0.5, 1e-4) == doctest::Approx(0.01));
  Stream rng(11);
  RunningStats counts;
  for (int i = 0; i < 10000; ++i) {
    const SubordinatorPath s = sample_subordinator(0.5, 1.0, 0.01, rng);
    counts.add(static_cast<double>(s.atoms().size()));
    CHECK(s(0.0) == 0.0);
    for (const Jump& j : s.atoms()) CHECK(j.w > 0.01);
  }
  CHECK(std::abs(counts.mean() - 20.0) < 3.0 * std::sqrt(20.0 / 10000.0));
}

TEST_CASE("subordinator evaluation") {
  const std::vector<Jump> atoms{{-0.5, 1.0}, {0.25, 2.0}, {0.75, 4.0}};
  const SubordinatorPath s(0.5, 1.0, 1e-8, atoms);
  const double drift = compensation_rate(0.5, 1e-8);
  CHECK(s(0.0) == 0.0);
  CHECK(s(0.25) == doctest::Approx(2.0 + 0.25 * drift));
  CHECK(s.left_limit(0.25) == doctest::Approx(0.25 * drift));
  CHECK(s(-0.5) == doctest::Approx(-0.5 * drift));
  CHECK(s.left_limit(-0.5) == doctest::Approx(-1.0 - 0.5 * drift));
  CHECK(s(1.0) == doctest::Approx(6.0 + drift));
  CHECK(s.untilted_increment(0.0, 0.5) == doctest::Approx(2.0 + 0.5 * drift));

  REQUIRE(s.jump_containing(1.0).has_value());
  CHECK(*s.jump_containing(1.0) == 1);
  CHECK(*s.jump_containing(s.left_limit(0.75)) == 2);
  CHECK_FALSE(s.jump_containing(s(0.75)).has_value());
  CHECK(*s.jump_containing(0.1) == 1);
  CHECK_FALSE(s.jump_containing(10.0).has_value());
  CHECK_FALSE(s.jump_containing(-2.0).has_value());

  const auto cells = s.cell_increments(4, -4, 4);
  REQUIRE(cells.size() == 8);
  CHECK(cells[1] == doctest::Approx(1.0 + drift / 4));  // (-0.75, -0.5]
  CHECK(cells[4] == doctest::Approx(2.0 + drift / 4));  // (0, 0.25]
  CHECK(cells[6] == doctest::Approx(4.0 + drift / 4));  // (0.5, 0.75]

  // tilt: increasing with lambda, factors positive, zero lambda exact
  const SubordinatorPath up = SubordinatorPath(0.5, 1.0, 1e-8, atoms, Tilt::Increasing, 0.5);
  CHECK(up(0.25) == doctest::Approx(2.0 * std::exp(0.25) + drift * std::expm1(0.25)));
  const SubordinatorPath down = up.with_lambda(0.0);
  CHECK(down(1.0) == s(1.0));
}

TEST_CASE("tilted subordinator is nondecreasing") {
  Stream rng(5);
  for (double lambda : {-1.0, 0.0, 0.7}) {
    const SubordinatorPath s = sample_subordinator(0.6, 2.0, 1e-3, rng, Tilt::Decreasing, lambda);
    double prev = s(-2.0);
    for (int i = 1; i <= 2000; ++i) {
      const double v = s(-2.0 + 4.0 * i / 2000.0);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("subordinator stationarity and self-similarity") {
  Stream rng(17);
  const double alpha = 0.5;
  const int paths = 10000;
  std::vector<double> first, later, scaled;
  for (int i = 0; i < paths; ++i) {
    const SubordinatorPath s = sample_subordinator(alpha, 3.0, 1e-3, rng);
    first.push_back(s(1.0) - s(0.0));
    later.push_back(s(3.0) - s(2.0));
    const double n = 16.0;
    const double scale = std::pow(n, 1.0 / alpha);
    const SubordinatorPath fine = sample_subordinator(alpha, 1.0 / n, 1e-3 / scale, rng);
    scaled.push_back(scale * (fine(1.0 / n) - fine(0.0)));
  }
  const Ecdf a(first), b(later), c(scaled);
  CHECK(ks_pvalue(ks_distance(a, b), a.size(), b.size()) > 0.01);
  CHECK(ks_pvalue(ks_distance(a, c), a.size(), c.size()) > 0.01);
  const double d = ks_distance_to(a, [&](double x) { return stable_marginal_cdf(alpha, x); });
  CHECK(ks_pvalue_one_sample(d, a.size()) > 0.01);
}
