#include <doctest.h>

#include <cmath>
#include <vector>

#include "rcm/environment.hpp"
#include "rcm/stats.hpp"

using namespace rcm;

namespace {

Environment from_resistances(const std::vector<double>& r, long long n, long long K, double lambda = 0.0) {
  std::vector<double> c;
  for (double v : r) c.push_back(1.0 / v);
  return Environment(ModelParams::walls(0.5, lambda), n, K, c);
}

}  // namespace

TEST_CASE("generation is deterministic and respects the law") {
  const ModelParams rw = ModelParams::walls(0.5);
  const Environment a = generate_environment(rw, 64, 2, std::uint64_t{42});
  const Environment b = generate_environment(rw, 64, 2, std::uint64_t{42});
  CHECK(a.conductances() == b.conductances());
  CHECK(a.edge_count() == 256);
  for (double c : a.conductances()) CHECK(c <= 1.0);

  // E[c] = E[U^{1/alpha}] = alpha / (1 + alpha)
  Stream rng(1);
  const Environment big = generate_environment(rw, 500000, 1, rng);
  RunningStats s;
  for (double c : big.conductances()) s.add(c);
  CHECK(std::abs(s.mean() - 1.0 / 3.0) < 3.0 * s.stderr_of_mean());
}

TEST_CASE("effective resistance") {
  // edges 0,1,2 carry r = 1,2,3 inside a K = 1, n = 3 window
  const Environment env = from_resistances({1, 1, 1, 1, 2, 3}, 3, 1);
  CHECK(effective_resistance(env, 0, 3) == doctest::Approx(6.0));
  CHECK(effective_resistance(env, 3, 0) == doctest::Approx(6.0));
  CHECK(effective_resistance(env, 2, 2) == 0.0);
  CHECK_THROWS(effective_resistance(env, 0, 4));

  std::vector<double> c(20, 1.0);
  c[13] = 2.0;  // edge 3 when K n = 10
  const Environment tilted(ModelParams::walls(0.5, 1.0), 10, 1, c);
  CHECK(tilted.r_tilt(3) == doctest::Approx(0.5 * std::exp(-0.6)));
  CHECK(effective_resistance(tilted, 3, 4) == doctest::Approx(0.5 * std::exp(-0.6)));
}

TEST_CASE("resistance additivity and tilt covariance") {
  Stream rng(9);
  const Environment env = generate_environment(ModelParams::walls(0.7, 0.4), 200, 1, rng);
  for (int t = 0; t < 200; ++t) {
    long long i = env.min_site() + static_cast<long long>(rng.uniform() * 401);
    long long k = env.min_site() + static_cast<long long>(rng.uniform() * 401);
    if (i > k) std::swap(i, k);
    const long long j = i + static_cast<long long>(rng.uniform() * static_cast<double>(k - i + 1));
    CHECK(effective_resistance(env, i, k) ==
          doctest::Approx(effective_resistance(env, i, j) + effective_resistance(env, j, k)).epsilon(1e-12));
  }
  const Environment flat(ModelParams::walls(0.7, 0.0), 200, 1, env.conductances());
  for (long long i = flat.first_edge(); i <= flat.last_edge(); ++i) {
    CHECK(flat.c_tilt(i) == flat.c(i));
    CHECK(flat.r_tilt(i) == flat.r(i));
  }
  CHECK(env.site_weight(5) == doctest::Approx(env.c_tilt(4) + env.c_tilt(5)));
  CHECK(env.site_weight(env.min_site()) == env.c_tilt(env.first_edge()));
}

TEST_CASE("exact hitting probabilities") {
  const Environment unit = from_resistances(std::vector<double>(8, 1.0), 4, 1);
  CHECK(hitting_probability_exact(unit, 1, 0, 3) == doctest::Approx(1.0 / 3.0));
  CHECK(hitting_probability_exact(unit, 0, -2, 2) == doctest::Approx(0.5));
  CHECK_THROWS(hitting_probability_exact(unit, 1, 2, 2));
  // a huge wall on the edge next to b
  std::vector<double> r(8, 1.0);
  r[4 + 2] = 1e6;  // edge {2, 3}
  const Environment wall = from_resistances(r, 4, 1);
  CHECK(hitting_probability_exact(wall, 2, 0, 3) == doctest::Approx(2.0 / (2.0 + 1e6)));
}

TEST_CASE("rescaled processes") {
  Stream rng(4);
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.5, 0.3);
  const Environment env = generate_environment(rwt, 100, 2, rng);
  const ScaleSet sc = scaling_terms(rwt, 100);
  const RescaledProcesses rp = rescaled_processes(env, sc);
  CHECK(rp.s0(0.0) == 0.0);
  double prev = rp.s0(-2.0);
  for (int i = 1; i <= 1000; ++i) {
    const double v = rp.s0(-2.0 + 4.0 * i / 1000.0);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(rp.s0(0.5) == doctest::Approx(effective_resistance(env, 0, 50) / sc.d_n0));
  CHECK(rp.s0(0.505) == rp.s0(0.5));
  CHECK(rp.s0(-0.5) == doctest::Approx(-effective_resistance(env, -50, 0) / sc.d_n0));
  CHECK(rp.s0(-0.495) == doctest::Approx(-effective_resistance(env, -49, 0) / sc.d_n0));

  double direct = 0.0;
  for (long long i = env.first_edge(); i <= env.last_edge(); ++i) direct += env.r(i);
  CHECK(rp.nu0.total_mass() == doctest::Approx(direct / sc.d_n0));
  REQUIRE(rp.sinf.has_value());
  REQUIRE(rp.nuinf.has_value());
  CHECK((*rp.sinf)(0.0) == 0.0);
  double cs = 0.0;
  for (long long i = 0; i < 30; ++i) cs += env.c_tilt(i);
  CHECK((*rp.sinf)(0.3) == doctest::Approx(cs / sc.d_ninf));

  const Environment rw = generate_environment(ModelParams::walls(0.5), 50, 1, rng);
  const RescaledProcesses only = rescaled_processes(rw, scaling_terms(ModelParams::walls(0.5), 50));
  CHECK_FALSE(only.sinf.has_value());
  CHECK(only.nu0.count(-1.0, 1.0, 0.0) == 100);
}

TEST_CASE("point measure") {
  const PointMeasure m({{0.5, 1.0}, {-0.2, 3.0}, {0.1, 0.2}});
  CHECK(m.atoms().front().location == -0.2);
  CHECK(m.count(-1.0, 1.0, 0.5) == 2);
  CHECK(m.count(0.0, 0.4, 0.0) == 1);
  CHECK_THROWS(PointMeasure({{0.1, 1.0}, {0.1, 2.0}}));
  CHECK_THROWS(PointMeasure({{0.1, 0.0}}));
}

TEST_CASE("wall and trap sets") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.5, 0.5, 0.5);
  const long long n = 32;
  const ScaleSet sc = scaling_terms(rwt, n);
  Environment flat(rwt, n, 1, std::vector<double>(64, 1.0));
  WallTrapSets s = wall_trap_sets(flat, sc, 0.1);
  CHECK(s.walls.empty());
  CHECK(s.traps.empty());
  CHECK(s.separated);

  const Environment two = flat.with_edge(3, 1e12).with_edge(5, 1e12);
  s = wall_trap_sets(two, sc, 0.1);
  CHECK(s.traps == std::vector<long long>{3, 5});
  CHECK_FALSE(s.separated);

  const Environment apart = flat.with_edge(-20, 1e-12).with_edge(10, 1e12);
  s = wall_trap_sets(apart, sc, 0.1);
  CHECK(s.walls == std::vector<long long>{-20});
  CHECK(s.separated);
  CHECK_THROWS(wall_trap_sets(flat, sc, 1.0));
}

TEST_CASE("jsonl round trip is bit exact") {
  const ModelParams rwt = ModelParams::walls_and_traps(0.8, 0.5, 0.3, -0.25);
  const Environment env = generate_environment(rwt, 300, 2, std::uint64_t{77});
  const Environment back = environment_from_jsonl(environment_to_jsonl(env));
  CHECK(back.conductances() == env.conductances());
  CHECK(back.seed() == env.seed());
  CHECK(back.params().alpha_inf == rwt.alpha_inf);
  CHECK(back.params().lambda == rwt.lambda);
  CHECK(back.n() == 300);
  CHECK(environment_to_jsonl(back) == environment_to_jsonl(env));
}
