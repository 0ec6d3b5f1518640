#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rcm/experiments.hpp"

using namespace rcm;

namespace {

ExperimentConfig small_walls() {
  ExperimentConfig c = default_config("aging-walls");
  c.n_list = {32, 64};
  c.K = 1;
  c.h_list = {1.5, 2.0};
  c.environments = 40;
  c.limit_replicas = 60;
  c.master_seed = 12;
  c.grid_step = 0.02;
  return c;
}

std::string read(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  ExperimentConfig c = small_walls();
  c.tolerance.j1_delta = 0.2;
  const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.hash() == c.hash());
  c.master_seed = 13;
  CHECK(back.hash() != c.hash());

  CHECK_THROWS(ExperimentConfig::from_json(R"({"n_list": [8]})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"master_seed": 1, "bogus": 2})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"master_seed": 1, "params": {"alpha0": 0.8, "beta": 1}})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"master_seed": 1, "tolerance": {"eps": 1}})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"master_seed": 1, "n_list": []})"));
  CHECK_THROWS(ExperimentConfig::from_json(R"({"master_seed": 1, "estimators": ["magic"]})"));
  CHECK_THROWS(ExperimentConfig::from_json(
      R"({"master_seed": 1, "coupled": true, "params": {"mode": "RWT", "alpha0": 0.8, "alpha_inf": 0.5}})"));
  const ExperimentConfig ok = ExperimentConfig::from_json(R"({"master_seed": 3})");
  CHECK(ok.master_seed == 3);
  CHECK_THROWS(default_config("nope"));
}

TEST_CASE("parallel_for covers every index once and forwards errors") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}

TEST_CASE("aging walls estimates and determinism") {
  const ExperimentConfig c = small_walls();
  const ExperimentResult a = run_aging_walls(c, 1);
  const ExperimentResult b = run_aging_walls(c, 3);
  CHECK(curves_csv(a) == curves_csv(b));
  for (const auto& row : a.rows) {
    CHECK(row.estimate.estimate >= 0.0);
    CHECK(row.estimate.estimate <= 1.0);
    CHECK(row.estimate.ci_lo <= row.estimate.estimate);
    CHECK(row.estimate.ci_hi >= row.estimate.estimate);
  }
  CHECK(a.row("limit", 0, 2.0).estimate.replicas == 60);
  CHECK(a.row("discrete", 64, 1.5).estimate.replicas == 40);

  ExperimentConfig bad = c;
  bad.h_list = {1.0};
  CHECK_THROWS(run_aging_walls(bad));
  bad = c;
  bad.params = ModelParams::walls_and_traps(0.8, 0.5, 0.5);
  CHECK_THROWS(run_aging_walls(bad));
}

TEST_CASE("quenched rows average to the annealed estimate") {
  ExperimentConfig c = small_walls();
  c.replicas = 4;
  c.environments = 10;
  c.estimators = {"discrete"};
  const ExperimentResult r = run_aging_walls(c);
  for (long long n : c.n_list)
    for (double h : c.h_list) {
      double sum = 0.0;
      int count = 0;
      for (const auto& q : r.quenched)
        if (q.n == n && q.h == h) {
          sum += q.estimate;
          ++count;
        }
      REQUIRE(count == 10);
      CHECK(sum / count == doctest::Approx(r.row("discrete", n, h).estimate.estimate).epsilon(1e-12));
    }
}

TEST_CASE("interval width shrinks like one over root replicas") {
  ExperimentConfig c = small_walls();
  c.estimators = {"limit"};
  c.limit_replicas = 400;
  const double w1 = [&] {
    const auto& e = run_aging_walls(c).row("limit", 0, 2.0).estimate;
    return e.ci_hi - e.ci_lo;
  }();
  c.limit_replicas = 1600;
  const auto& e2 = run_aging_walls(c).row("limit", 0, 2.0).estimate;
  const double ratio = w1 / (e2.ci_hi - e2.ci_lo);
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.5);
}

TEST_CASE("aging traps and sub-aging at desk scale") {
  ExperimentConfig c = default_config("aging-traps");
  c.n_list = {32, 64};
  c.K = 1;
  c.h_list = {2.0};
  c.environments = 60;
  c.limit_replicas = 100;
  c.master_seed = 4;
  const ExperimentResult r = run_aging_traps(c);
  for (const auto& row : r.rows) {
    CHECK(row.estimate.estimate > 0.0);
    CHECK(row.estimate.estimate < 1.0);
  }

  ExperimentConfig s = default_config("subaging");
  s.n_list = {64};
  s.K = 1;
  s.h_list = {0.01, 1.0};
  s.environments = 80;
  s.limit_replicas = 100;
  s.master_seed = 9;
  const ExperimentResult q = run_subaging(s);
  CHECK(q.counters.at("window_tail_mismatches") == 0);
  for (double h : s.h_list)
    CHECK(q.row("window", 64, h).estimate.estimate == q.row("escape_tail", 64, h).estimate.estimate);
  CHECK(q.row("window", 64, 0.01).estimate.estimate >= q.row("window", 64, 1.0).estimate.estimate);
  CHECK(q.row("theta_bar", 0, 0.01).estimate.estimate > q.row("theta_bar", 0, 1.0).estimate.estimate);
  CHECK(q.row("theta_bar", 0, 1.0).estimate.estimate > 0.0);
  s.h_list = {0.0};
  CHECK_THROWS(run_subaging(s));
}

TEST_CASE("gap samples are positive and outputs are written") {
  ExperimentConfig c = default_config("gap");
  c.n_list = {32, 64};
  c.K = 1;
  c.environments = 30;
  c.limit_replicas = 60;
  c.master_seed = 2;
  c.grid_step = 0.02;
  const ExperimentResult r = run_gap(c, 2);
  for (const auto& [name, values] : r.samples)
    for (double v : values) CHECK(v > 0.0);
  CHECK(r.row("gap_ks", 64, 1.0).estimate.estimate <= 1.0);
  CHECK(r.row("gap_mean", 32, 1.0).sentinel_fraction.has_value());

  const auto dir = std::filesystem::temp_directory_path() / "rcm_test_outputs";
  std::filesystem::remove_all(dir);
  write_outputs(r, c, dir.string());
  const std::string curves = read(dir / "curves.csv");
  CHECK(curves.rfind("estimator,n,h,estimate,stderr,ci_lo,ci_hi,replicas,sentinel_fraction\n", 0) == 0);
  CHECK(std::filesystem::exists(dir / "meta.json"));
  CHECK(std::filesystem::exists(dir / "samples.csv"));
  write_outputs(r, c, dir.string(), OutputFormat::Jsonl);
  CHECK(std::filesystem::exists(dir / "curves.jsonl"));
  std::filesystem::remove_all(dir);

  c.estimators = {"discrete"};
  const ExperimentResult d = run_gap(c);
  CHECK(d.samples.count("limit") == 0);
  CHECK_THROWS(d.row("gap_ks", 64, 1.0));
}

TEST_CASE("j1 experiment produces bounds") {
  ExperimentConfig c = default_config("j1");
  c.n_list = {64, 256};
  c.K = 1;
  c.environments = 4;
  c.master_seed = 1;
  const ExperimentResult r = run_j1(c);
  for (long long n : c.n_list) CHECK(r.counters.at("j1_failures_n=" + std::to_string(n)) == 0);
  CHECK(r.row("j1", 256, 0.0).estimate.estimate < r.row("j1", 64, 0.0).estimate.estimate);
}
