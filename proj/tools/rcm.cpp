#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rcm/environment.hpp"
#include "rcm/experiments.hpp"
#include "rcm/heavy_tails.hpp"
#include "rcm/limit_sim.hpp"
#include "rcm/stats.hpp"
#include "rcm/walk_sim.hpp"

using namespace rcm;
using nlohmann::json;

namespace {

struct ModelFlags {
  std::string mode = "RW";
  double alpha0 = 0.8;
  double alpha_inf = 0.5;
  double p = 0.5;
  double lambda = 0.0;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "RW or RWT")->check(CLI::IsMember({"RW", "RWT"}));
    app->add_option("--alpha0", alpha0, "resistance tail index");
    app->add_option("--alpha-inf", alpha_inf, "conductance tail index (RWT)");
    app->add_option("--p", p, "trap weight (RWT)");
    app->add_option("--lambda", lambda, "bias");
  }
  ModelParams params() const {
    const ModelParams m = mode == "RW" ? ModelParams::walls(alpha0, lambda)
                                       : ModelParams::walls_and_traps(alpha0, alpha_inf, p, lambda);
    m.validate();
    return m;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out);
  f << text;
}

std::vector<double> read_column(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<double> v;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto comma = line.find_last_of(',');
    const std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
    try {
      v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      // header or label line
    }
  }
  return v;
}

json scales_json(const ScaleSet& s) {
  return {{"n", s.n},          {"d_n0", s.d_n0},       {"d_ninf", s.d_ninf},         {"a_n", s.a_n},
          {"b_n", s.b_n},      {"d_star_n0", s.d_star_n0}, {"d_star_ninf", s.d_star_ninf},
          {"log_d_n0", s.log_d_n0}, {"log_d_ninf", s.log_d_ninf}, {"log_a_n", s.log_a_n}, {"log_b_n", s.log_b_n}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random conductance model with heavy-tailed walls and traps"};
  app.require_subcommand(1);

  // scales
  auto* scales = app.add_subcommand("scales", "print the scaling sequences");
  ModelFlags scales_model;
  scales_model.add(scales);
  std::vector<long long> scales_n{256, 1024, 4096};
  scales->add_option("--n", scales_n, "window scales")->delimiter(',');

  // env gen
  auto* env = app.add_subcommand("env", "environments");
  env->require_subcommand(1);
  auto* env_gen = env->add_subcommand("gen", "sample an environment");
  ModelFlags env_model;
  env_model.add(env_gen);
  long long env_n = 256, env_K = 2;
  std::uint64_t env_seed = 0;
  std::string env_out;
  std::string env_format = "jsonl";
  env_gen->add_option("--n", env_n, "scale");
  env_gen->add_option("--K", env_K, "window half width in units of n");
  env_gen->add_option("--seed", env_seed, "seed")->required();
  env_gen->add_option("--out", env_out, "output file (default stdout)");
  env_gen->add_option("--format", env_format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));

  // walk run
  auto* walk = app.add_subcommand("walk", "walks");
  walk->require_subcommand(1);
  auto* walk_run = walk->add_subcommand("run", "simulate one walk");
  std::string walk_env;
  ModelFlags walk_model;
  walk_model.add(walk_run);
  long long walk_n = 64, walk_K = 1, walk_x0 = 0;
  double walk_t = 1000.0;
  std::uint64_t walk_seed = 0;
  std::string walk_out;
  bool walk_no_collapse = false;
  walk_run->add_option("--env", walk_env, "environment JSONL file (default: sample one)");
  walk_run->add_option("--n", walk_n, "scale when sampling");
  walk_run->add_option("--K", walk_K, "window when sampling");
  walk_run->add_option("--x0", walk_x0, "start site");
  walk_run->add_option("--t", walk_t, "time horizon");
  walk_run->add_option("--seed", walk_seed, "seed")->required();
  walk_run->add_option("--out", walk_out, "path CSV (default stdout)");
  walk_run->add_flag("--no-collapse", walk_no_collapse, "simulate trap oscillations one by one");

  // limit run
  auto* limit = app.add_subcommand("limit", "limit processes");
  limit->require_subcommand(1);
  auto* limit_run = limit->add_subcommand("run", "simulate one quasi-diffusion path");
  ModelFlags limit_model;
  limit_model.add(limit_run);
  double limit_K = 2.0, limit_t = 1.0, limit_grid = 0.01, limit_cutoff = 1e-3, limit_eps = 1e-4;
  std::uint64_t limit_seed = 0;
  std::string limit_out = "limit_out";
  limit_run->add_option("--K", limit_K, "window");
  limit_run->add_option("--t", limit_t, "time horizon");
  limit_run->add_option("--grid-step", limit_grid, "walls grid step");
  limit_run->add_option("--weight-cutoff", limit_cutoff, "trap weight cutoff");
  limit_run->add_option("--epsilon0", limit_eps, "resistance subordinator truncation");
  limit_run->add_option("--seed", limit_seed, "seed")->required();
  limit_run->add_option("--out", limit_out, "output directory");

  // experiments
  auto* exp = app.add_subcommand("exp", "experiments");
  exp->require_subcommand(1);
  std::string exp_config, exp_out, exp_format = "csv";
  std::uint64_t exp_seed = 0;
  unsigned exp_workers = 1;
  std::string exp_name;
  for (const char* name : {"aging-walls", "aging-traps", "subaging", "gap", "j1"}) {
    auto* sub = exp->add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", exp_config, "JSON config (defaults per experiment otherwise)");
    sub->add_option("--seed", exp_seed, "master seed (overrides the config)");
    sub->add_option("--out", exp_out, "output directory (overrides the config)");
    sub->add_option("--workers", exp_workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", exp_format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
    sub->callback([&exp_name, name] { exp_name = name; });
  }

  // stats ks
  auto* stats = app.add_subcommand("stats", "statistics utilities");
  stats->require_subcommand(1);
  auto* ks = stats->add_subcommand("ks", "two-sample Kolmogorov-Smirnov distance");
  std::string ks_a, ks_b;
  ks->add_option("a", ks_a, "first sample (one value per line, last CSV column)")->required();
  ks->add_option("b", ks_b, "second sample")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (scales->parsed()) {
      const ModelParams p = scales_model.params();
      json out = json::array();
      for (long long n : scales_n) out.push_back(scales_json(scaling_terms(p, n)));
      std::cout << out.dump(2) << '\n';
    } else if (env_gen->parsed()) {
      const Environment e = generate_environment(env_model.params(), env_n, env_K, env_seed);
      if (env_format == "jsonl") {
        emit(environment_to_jsonl(e) + "\n", env_out);
      } else {
        std::ostringstream s;
        s.precision(17);
        s << "edge,c,r\n";
        for (long long i = e.first_edge(); i <= e.last_edge(); ++i) s << i << ',' << e.c(i) << ',' << e.r(i) << '\n';
        emit(s.str(), env_out);
      }
    } else if (walk_run->parsed()) {
      const Environment e = walk_env.empty()
                                ? generate_environment(walk_model.params(), walk_n, walk_K, walk_seed)
                                : environment_from_jsonl(slurp(walk_env));
      WalkOptions opt;
      opt.collapse = !walk_no_collapse;
      Stream rng(SeedKey::hash({walk_seed, 0x77616c6bULL}));
      emit(simulate_walk(e, walk_x0, walk_t, {}, opt, rng).to_csv(), walk_out);
    } else if (limit_run->parsed()) {
      const ModelParams p = limit_model.params();
      Stream rng(SeedKey::hash({limit_seed, 0x6c696dULL}));
      const SubordinatorPath s0 = sample_subordinator(p.alpha0, limit_K, limit_eps, rng, Tilt::Decreasing, p.lambda);
      AtomicSpeedMeasure m;
      if (p.mode == Mode::RW) {
        m = build_speed_measure_walls(s0, p.lambda, limit_K, limit_grid, mean_conductance(p));
      } else {
        const SubordinatorPath si =
            sample_subordinator(*p.alpha_inf, limit_K, limit_cutoff, rng, Tilt::Increasing, p.lambda);
        m = build_speed_measure_traps(s0, si, p.lambda, limit_K, limit_cutoff);
      }
      QuasiDiffusionOptions opt;
      opt.record_events = true;
      const LimitPath path = simulate_quasi_diffusion(m, m.start_atom(0.0, rng), limit_t, {}, rng, opt);
      std::filesystem::create_directories(limit_out);
      emit(m.to_json() + "\n", limit_out + "/measure.json");
      emit(path.to_csv(m), limit_out + "/path.csv");
      std::cout << "atoms " << m.size() << ", events " << path.events << ", written to " << limit_out << '\n';
    } else if (exp->parsed()) {
      ExperimentConfig c = exp_config.empty() ? default_config(exp_name) : ExperimentConfig::from_json(slurp(exp_config));
      if (exp_config.empty() || exp->get_subcommand(exp_name)->count("--seed")) c.master_seed = exp_seed;
      if (!exp_out.empty()) c.output_dir = exp_out;
      c.validate();
      const ExperimentResult r = run_experiment(exp_name, c, exp_workers);
      write_outputs(r, c, c.output_dir, format_from_string(exp_format));
      std::cout << (exp_format == "csv" ? curves_csv(r) : curves_jsonl(r));
      for (const auto& [k, v] : r.counters) std::cout << k << " = " << v << '\n';
      std::cerr << "wrote " << c.output_dir << " in " << r.wall_seconds << " s\n";
    } else if (ks->parsed()) {
      const Ecdf a(read_column(ks_a)), b(read_column(ks_b));
      if (a.empty() || b.empty()) throw std::invalid_argument("stats ks: empty sample");
      const double d = ks_distance(a, b);
      std::cout << json{{"ks", d}, {"p_value", ks_pvalue(d, a.size(), b.size())}, {"n_a", a.size()},
                        {"n_b", b.size()}}
                       .dump()
                << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
