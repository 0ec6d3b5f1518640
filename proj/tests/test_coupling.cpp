#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "rcm/coupling.hpp"
#include "rcm/stats.hpp"

using namespace rcm;

namespace {

// s with table.inverse(s) = y, by bisection in log s
double invert_g(const QuantileTable& t, double y) {
  double lo = std::log(t.s_min()), hi = std::log(t.s_max()) + 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (t.inverse(std::exp(mid)) < y ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
  return r;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  RunningStats sa, sb;
  for (double v : a) sa.add(v);
  for (double v : b) sb.add(v);
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - sa.mean()) * (b[i] - sb.mean());
  cov /= static_cast<double>(a.size() - 1);
  return cov / std::sqrt(sa.variance() * sb.variance());
}

}  // namespace

TEST_CASE("quantile table matches tails") {
  for (double alpha : {0.5, 0.8}) {
    const auto t = shared_quantile_table(alpha);
    for (double ls = -3.0; ls <= 12.0; ls += 0.37) {
      const double s = std::pow(10.0, ls);
      CHECK(std::abs(t->survival(s) - stable_marginal_survival(alpha, s)) <= 2e-4);
    }
    for (double ly = 0.01; ly <= 6.0; ly += 0.25) {
      const double y = std::pow(10.0, ly);
      const double s = invert_g(*t, y);
      CHECK(std::abs(stable_marginal_survival(alpha, s) - std::pow(y, -alpha)) <= 2e-4);
    }
    CHECK(t->inverse(0.0) == 1.0);
    CHECK(t->knots() == 2048);
    CHECK(shared_quantile_table(alpha).get() == t.get());
  }
}

TEST_CASE("g function") {
  const double alpha = 0.5;
  const auto t = shared_quantile_table(alpha);
  CHECK_THROWS(g_function(alpha, 100, -1.0, *t, 1.0));
  for (long long n : {100LL, 1000LL, 10000LL}) {
    const double dstar = std::pow(static_cast<double>(n), 1.0 / alpha);
    double prev = 0.0;
    for (int i = 0; i < 100; ++i) {
      const double y = 0.05 * i;
      const double g = g_function(alpha, n, y, *t, dstar);
      CHECK(g >= prev);
      prev = g;
    }
  }
  double prev_err = 1e9;
  for (long long n : {100LL, 1000LL, 10000LL}) {
    const double dstar = std::pow(static_cast<double>(n), 1.0 / alpha);
    const double err = std::abs(g_function(alpha, n, 1.0, *t, dstar) - 1.0);
    CHECK(err < prev_err);
    prev_err = err;
  }
  // g_n(y) <= C y^{1 - delta'} on [n^{-1/alpha}, 1] with C uniform in n
  for (long long n : {100LL, 1000LL, 10000LL}) {
    const double dstar = std::pow(static_cast<double>(n), 1.0 / alpha);
    double C = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double y = std::pow(dstar, -1.0 + i / 200.0);
      C = std::max(C, g_function(alpha, n, y, *t, dstar) / std::pow(y, 0.95));
    }
    CHECK(C < 5.0);
  }
}

TEST_CASE("star index bookkeeping") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.4);
  const CouplingBundle b = build_bundle(rwt, 1, 200, 3);
  for (long long x = -200; x <= 200; ++x) {
    long long brute = 0;
    if (x >= 0)
      for (long long j = 0; j < x; ++j) brute += b.b(j);
    else
      for (long long j = x + 1; j < 0; ++j) brute -= b.b(j);
    CHECK(b.star(x) == brute);
  }
}

TEST_CASE("coupled marginal matches the direct law") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.5);
  const CouplingBundle b = build_bundle(rwt, 2, 4096, 11);
  const CoupledEnvironment ce = build_coupled_environment(b, rwt, 4096, 2);
  std::vector<double> coupled(ce.env.conductances().begin(), ce.env.conductances().begin() + 10000);
  Stream rng(12);
  std::vector<double> direct(10000);
  for (auto& v : direct) v = sample_edge_law(rwt, rng).c;
  const Ecdf a(coupled), d(direct);
  CHECK(ks_pvalue(ks_distance(a, d), a.size(), d.size()) > 0.01);

  const CoupledEnvironment again = build_coupled_environment(b, rwt, 4096, 2);
  CHECK(again.env.conductances() == ce.env.conductances());
}

TEST_CASE("degenerate thinning gives only conductance-type edges") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.5);
  Stream r0(1), r1(2);
  const CouplingBundle b = make_bundle(rwt, 1, 64, std::vector<std::uint8_t>(128, 1),
                                       sample_subordinator(0.8, 1.0, 1e-4, r0),
                                       sample_subordinator(0.5, 1.0, 1e-4, r1, Tilt::Increasing));
  const CoupledEnvironment ce = build_coupled_environment(b, rwt, 64, 1);
  for (double c : ce.env.conductances()) CHECK(c >= 1.0);
  CHECK_THROWS(build_coupled_environment(b, rwt, 128, 1));
}

TEST_CASE("correspondence and atom matching under RW") {
  const ModelParams rw = ModelParams::walls(0.8);
  const CouplingBundle b = build_bundle(rw, 1, 4096, 5);
  const PointMeasure limit = coupled_limit_measure(b, false);
  double prev = 1e9;
  for (long long n : {256LL, 1024LL, 4096LL}) {
    const CoupledEnvironment ce = build_coupled_environment(b, rw, n, 1);
    const ScaleSet sc = scaling_terms(rw, n);
    const RescaledProcesses rp = rescaled_processes(ce.env, sc);
    const MatchReport m = match_atoms(rp.nu0, limit, {-1.0, 1.0, 0.5}, {2.0 / n, 0.05});
    CHECK(m.failures.empty());
    CHECK(m.matches.size() == m.limit_count);
    CHECK(m.max_displacement() < prev);
    prev = m.max_displacement();
    // every big limit atom sits on its corresponding edge
    for (std::size_t k = 0; k < b.sub0.atoms().size(); ++k) {
      const Jump& a = b.sub0.atoms()[k];
      if (a.w < 0.5) continue;
      REQUIRE(ce.correspondence.edge_of_atom0[k].has_value());
      CHECK(ce.env.r(*ce.correspondence.edge_of_atom0[k]) / sc.d_n0 == doctest::Approx(a.w).epsilon(0.05));
    }
  }
}

TEST_CASE("match atoms basics") {
  const PointMeasure limit({{0.3, 2.0}});
  const PointMeasure same({{0.3, 2.0}});
  MatchReport m = match_atoms(same, limit, {-1, 1, 0.5}, {0.05, 0.05});
  REQUIRE(m.ok());
  CHECK(m.matches[0].displacement() == 0.0);
  const PointMeasure near({{0.3 + 1.0 / 256, 2.01}});
  m = match_atoms(near, limit, {-1, 1, 0.5}, {0.05, 0.05});
  CHECK(m.ok());
  const PointMeasure two({{0.29, 2.0}, {0.31, 2.02}});
  m = match_atoms(two, limit, {-1, 1, 0.5}, {0.05, 0.05});
  REQUIRE(m.failures.size() == 1);
  CHECK(m.failures[0].second == MatchFailure::Ambiguous);
  const PointMeasure far({{0.8, 2.0}});
  m = match_atoms(far, limit, {-1, 1, 0.5}, {0.05, 0.05});
  REQUIRE(m.failures.size() == 1);
  CHECK(m.failures[0].second == MatchFailure::Absent);
}

TEST_CASE("wall and trap families are independent across bundles") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.5);
  std::vector<double> walls, traps;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const CouplingBundle b = build_bundle(rwt, 1, 64, 1000 + s);
    double w0 = 0.0, wi = 0.0;
    for (const Jump& a : b.sub0.atoms()) w0 = std::max(w0, a.w);
    for (const Jump& a : b.subinf->atoms()) wi = std::max(wi, a.w);
    walls.push_back(w0);
    traps.push_back(wi);
  }
  CHECK(std::abs(correlation(ranks(walls), ranks(traps))) < 3.0 / std::sqrt(500.0));
}

TEST_CASE("conditioned scale ratio") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.3);
  for (long long n : {1000LL, 10000LL, 100000LL}) {
    const ScaleSet s = scaling_terms(rwt, n);
    CHECK(s.d_star_ninf / s.d_ninf == doctest::Approx(std::pow(0.3, -2.0)).epsilon(1e-12));
  }
}

TEST_CASE("bundle json round trip") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.5, 0.2);
  const CouplingBundle b = build_bundle(rwt, 1, 128, 9);
  const CouplingBundle back = bundle_from_json(bundle_to_json(b));
  CHECK(back.bern == b.bern);
  CHECK(back.sub0.atoms().size() == b.sub0.atoms().size());
  const auto e1 = build_coupled_environment(b, rwt, 128, 1).env.conductances();
  const auto e2 = build_coupled_environment(back, rwt, 128, 1).env.conductances();
  CHECK(e1 == e2);
}
