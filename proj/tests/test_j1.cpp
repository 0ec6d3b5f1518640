#include <doctest.h>

#include <cmath>
#include <vector>

#include "rcm/heavy_tails.hpp"
#include "rcm/j1.hpp"

using namespace rcm;

TEST_CASE("identical paths") {
  const CadlagPath f = CadlagPath::step({0.0, 0.3, 0.7}, {0.0, 1.0, 0.5});
  const J1Bound b = j1_upper_bound(f, f, 0.1);
  REQUIRE(b.ok);
  CHECK(b.value == 0.0);
  CHECK(b.matched == 2);
}

TEST_CASE("shifted unit jump") {
  for (double e : {0.1, 0.01, 0.001}) {
    const CadlagPath f = CadlagPath::step({0.0, 0.5}, {0.0, 1.0});
    const CadlagPath g = CadlagPath::step({0.0, 0.5 + e}, {0.0, 1.0});
    const J1Bound b = j1_upper_bound(f, g, 0.5);
    REQUIRE(b.ok);
    CHECK(b.value <= e + 1e-15);
    CHECK(b.space_term == 0.0);
    // without matching the uniform distance is the full jump
    CHECK(j1_upper_bound(f, g, 2.0).value == 1.0);
  }
}

TEST_CASE("mismatched jump counts are reported") {
  const CadlagPath f = CadlagPath::step({0.0, 0.5}, {0.0, 1.0});
  const CadlagPath g = CadlagPath::step({0.0, 0.4, 0.6}, {0.0, 0.5, 1.0});
  const J1Bound b = j1_upper_bound(f, g, 0.4);
  CHECK_FALSE(b.ok);
  CHECK(b.jumps_f == 1);
  CHECK(b.jumps_g == 2);
  CHECK_FALSE(b.error.empty());
}

TEST_CASE("linear pieces") {
  // f(t) = t, g(t) = t + 0.1 with a shared unit jump at 0.5 in f and 0.52 in g
  const CadlagPath f({0.0, 0.5}, {0.0, 1.5}, {0.5, 2.0});
  const CadlagPath g({0.0, 0.52}, {0.1, 1.62}, {0.62, 2.1});
  const J1Bound b = j1_upper_bound(f, g, 0.5);
  REQUIRE(b.ok);
  CHECK(b.time_term == doctest::Approx(0.02));
  // f o xi - g is linear on each piece; its largest deviation sits at the ends
  CHECK(b.space_term == doctest::Approx(0.12));
  CHECK(f(0.25) == doctest::Approx(0.25));
  CHECK(f(0.5) == doctest::Approx(1.5));
}

TEST_CASE("bound shrinks along lattice discretizations of a subordinator") {
  Stream rng(3);
  const SubordinatorPath s = sample_subordinator(0.8, 1.0, 1e-5, rng);
  std::vector<double> sizes;
  for (const Jump& j : s.atoms()) sizes.push_back(j.w);
  const double delta = separated_threshold(sizes, 0.05);
  // limit path on [-1, 1] mapped to [0, 1]
  std::vector<double> t{0.0}, a{s(-1.0)}, b;
  for (const Jump& j : s.atoms()) {
    if (j.u <= -1.0 || j.u >= 1.0) continue;
    b.push_back(s.left_limit(j.u));
    t.push_back((j.u + 1.0) / 2.0);
    a.push_back(s(j.u));
  }
  b.push_back(s.left_limit(1.0));
  const CadlagPath g(t, a, b);
  double prev = INFINITY;
  for (long long n : {64, 256, 1024}) {
    std::vector<double> tt, vv;
    for (long long k = -n; k < n; ++k) {
      tt.push_back(static_cast<double>(k + n) / (2.0 * n));
      vv.push_back(s(static_cast<double>(k) / n));
    }
    const J1Bound r = j1_upper_bound(CadlagPath::step(tt, vv), g, delta);
    REQUIRE(r.ok);
    CHECK(r.value < prev);
    prev = r.value;
  }
}

TEST_CASE("separated threshold avoids nearby jump sizes") {
  const double d = separated_threshold({0.09, 0.11, 0.5, 0.01}, 0.1, 1.5);
  for (double x : {0.09, 0.11, 0.5, 0.01}) CHECK((x < d / 1.5 || x > d * 1.5));
}
