#include "rcm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "rcm/coupling.hpp"
#include "rcm/environment.hpp"
#include "rcm/j1.hpp"
#include "rcm/limit_sim.hpp"
#include "rcm/random.hpp"
#include "rcm/walk_sim.hpp"

namespace rcm {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "1.0.0";

enum ExperimentId : std::uint64_t { kAgingWalls = 1, kAgingTraps = 2, kSubaging = 3, kGap = 4, kJ1 = 5 };

// replica words of the substream key
std::uint64_t env_word(long long n) { return (std::uint64_t{1} << 62) | static_cast<std::uint64_t>(n); }
std::uint64_t bundle_word() { return std::uint64_t{1} << 61; }
std::uint64_t walk_word(long long n, std::size_t r) {
  return (static_cast<std::uint64_t>(n) << 24) | static_cast<std::uint64_t>(r);
}
std::uint64_t limit_env(std::size_t i) { return (std::uint64_t{1} << 63) | i; }
std::uint64_t coupled_limit_word(std::size_t j) { return (std::uint64_t{1} << 60) | j; }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
}

json params_to_json(const ModelParams& p) {
  json j{{"mode", to_string(p.mode)}, {"alpha0", p.alpha0}, {"lambda", p.lambda}, {"p", p.p}};
  j["alpha_inf"] = p.alpha_inf ? json(*p.alpha_inf) : json(nullptr);
  return j;
}

ModelParams params_from_json(const json& j) {
  reject_unknown(j, {"mode", "alpha0", "alpha_inf", "lambda", "p"}, "params");
  ModelParams p;
  if (j.contains("mode")) p.mode = mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("alpha0")) p.alpha0 = j.at("alpha0").get<double>();
  if (j.contains("alpha_inf") && !j.at("alpha_inf").is_null()) p.alpha_inf = j.at("alpha_inf").get<double>();
  if (j.contains("lambda")) p.lambda = j.at("lambda").get<double>();
  if (j.contains("p")) p.p = j.at("p").get<double>();
  p.validate();
  return p;
}

std::uint64_t poisson(double mean, Stream& rng) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<long long> d(mean);
  return static_cast<std::uint64_t>(d(rng));
}

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

std::vector<double> sorted_h(const ExperimentConfig& c) {
  std::vector<double> h = c.h_list;
  std::sort(h.begin(), h.end());
  return h;
}

void require_mode(const ExperimentConfig& c, Mode mode, const char* what) {
  c.validate();
  if (c.params.mode != mode)
    throw std::invalid_argument(std::string(what) + ": needs mode " + to_string(mode));
}

WalkKernel make_kernel(const Environment& env, const ExperimentConfig& c) {
  return WalkKernel(env, c.collapse ? c.collapse_ratio : 0.0);
}

// Walls measure on [-K, K] for a subordinator sampled or taken from a bundle.
AtomicSpeedMeasure walls_measure(const SubordinatorPath& sub0, const ExperimentConfig& c) {
  WallsMeasureOptions opt;
  opt.density_factor = c.speed_density_factor;
  return build_speed_measure_walls(sub0, c.params.lambda, static_cast<double>(c.K), c.grid_step,
                                   mean_conductance(c.params), opt);
}

SubordinatorPath fresh_sub0(const ExperimentConfig& c, Stream& rng) {
  return sample_subordinator(c.params.alpha0, static_cast<double>(c.K), c.epsilon0, rng, Tilt::Decreasing,
                             c.params.lambda);
}

struct EnvSource {
  const ExperimentConfig& c;
  std::uint64_t exp;
  std::optional<CouplingBundle> bundle;

  EnvSource(const ExperimentConfig& config, std::uint64_t exp_id, std::size_t e) : c(config), exp(exp_id) {
    if (c.coupled) {
      const long long n_max = *std::max_element(c.n_list.begin(), c.n_list.end());
      BundleOptions opt;
      opt.eta = c.tolerance.eta;
      const SeedKey key = SeedKey::hash({c.master_seed, exp, e, bundle_word()});
      bundle = build_bundle(c.params, c.K, n_max, key.lo ^ key.hi, opt);
    }
  }
  Environment environment(long long n, std::size_t e) const {
    if (bundle) return build_coupled_environment(*bundle, c.params, n, c.K).env;
    Stream rng = substream(c.master_seed, exp, e, env_word(n));
    return generate_environment(c.params, n, c.K, rng);
  }
};

// one proportion per (n, h) slot, accumulated in index order
struct Tally {
  std::vector<std::uint64_t> hits;
  std::uint64_t trials = 0;
};

void emit_curves(ExperimentResult& out, const std::string& estimator, long long n, const std::vector<double>& h,
                 const Tally& t) {
  for (std::size_t k = 0; k < h.size(); ++k) out.rows.push_back({estimator, n, h[k], proportion_estimate(t.hits[k], t.trials), {}});
}

}  // namespace

bool ExperimentConfig::wants(const std::string& estimator) const {
  return std::find(estimators.begin(), estimators.end(), estimator) != estimators.end();
}

void ExperimentConfig::validate() const {
  params.validate();
  if (n_list.empty()) throw std::invalid_argument("config: n_list must be nonempty");
  for (long long n : n_list)
    if (n < 1 || n >= (1LL << 38)) throw std::invalid_argument("config: n out of range");
  if (K < 1) throw std::invalid_argument("config: K must be >= 1");
  for (double h : h_list)
    if (!(h >= 0.0) || !std::isfinite(h)) throw std::invalid_argument("config: h must be finite and >= 0");
  if (environments < 1 || replicas < 1) throw std::invalid_argument("config: environments and replicas must be >= 1");
  if (replicas >= (std::size_t{1} << 24)) throw std::invalid_argument("config: too many replicas");
  for (const auto& e : estimators)
    if (e != "discrete" && e != "limit") throw std::invalid_argument("config: unknown estimator '" + e + "'");
  if (coupled && params.mode != Mode::RW) throw std::invalid_argument("config: coupled environments need mode RW");
  if (!(collapse_ratio > 1.0)) throw std::invalid_argument("config: collapse_ratio must exceed 1");
  if (!(grid_step > 0.0) || !(weight_cutoff > 0.0) || !(epsilon0 > 0.0) || !(speed_density_factor > 0.0))
    throw std::invalid_argument("config: grid_step, weight_cutoff, epsilon0 and speed_density_factor must be positive");
  if (!(tolerance.eta > 0.0) || !(tolerance.j1_delta > 0.0) || !(tolerance.weight_relative >= 0.0))
    throw std::invalid_argument("config: bad tolerance settings");
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  reject_unknown(j,
                 {"params", "n_list", "K", "h_list", "environments", "replicas", "limit_replicas", "master_seed",
                  "estimators", "output_dir", "coupled", "collapse", "collapse_ratio", "grid_step", "weight_cutoff",
                  "epsilon0", "speed_density_factor", "tolerance"},
                 "config");
  if (!j.contains("master_seed")) throw std::invalid_argument("config: master_seed is required");
  ExperimentConfig c;
  if (j.contains("params")) c.params = params_from_json(j.at("params"));
  if (j.contains("n_list")) c.n_list = j.at("n_list").get<std::vector<long long>>();
  if (j.contains("K")) c.K = j.at("K").get<long long>();
  if (j.contains("h_list")) c.h_list = j.at("h_list").get<std::vector<double>>();
  if (j.contains("environments")) c.environments = j.at("environments").get<std::size_t>();
  if (j.contains("replicas")) c.replicas = j.at("replicas").get<std::size_t>();
  if (j.contains("limit_replicas")) c.limit_replicas = j.at("limit_replicas").get<std::size_t>();
  c.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("estimators")) c.estimators = j.at("estimators").get<std::vector<std::string>>();
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("coupled")) c.coupled = j.at("coupled").get<bool>();
  if (j.contains("collapse")) c.collapse = j.at("collapse").get<bool>();
  if (j.contains("collapse_ratio")) c.collapse_ratio = j.at("collapse_ratio").get<double>();
  if (j.contains("grid_step")) c.grid_step = j.at("grid_step").get<double>();
  if (j.contains("weight_cutoff")) c.weight_cutoff = j.at("weight_cutoff").get<double>();
  if (j.contains("epsilon0")) c.epsilon0 = j.at("epsilon0").get<double>();
  if (j.contains("speed_density_factor")) c.speed_density_factor = j.at("speed_density_factor").get<double>();
  if (j.contains("tolerance")) {
    const json& t = j.at("tolerance");
    reject_unknown(t, {"location", "weight_relative", "eta", "j1_delta"}, "tolerance");
    if (t.contains("location")) c.tolerance.location = t.at("location").get<double>();
    if (t.contains("weight_relative")) c.tolerance.weight_relative = t.at("weight_relative").get<double>();
    if (t.contains("eta")) c.tolerance.eta = t.at("eta").get<double>();
    if (t.contains("j1_delta")) c.tolerance.j1_delta = t.at("j1_delta").get<double>();
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j{{"params", params_to_json(params)},
         {"n_list", n_list},
         {"K", K},
         {"h_list", h_list},
         {"environments", environments},
         {"replicas", replicas},
         {"limit_replicas", limit_replicas},
         {"master_seed", master_seed},
         {"estimators", estimators},
         {"output_dir", output_dir},
         {"coupled", coupled},
         {"collapse", collapse},
         {"collapse_ratio", collapse_ratio},
         {"grid_step", grid_step},
         {"weight_cutoff", weight_cutoff},
         {"epsilon0", epsilon0},
         {"speed_density_factor", speed_density_factor},
         {"tolerance",
          {{"location", tolerance.location},
           {"weight_relative", tolerance.weight_relative},
           {"eta", tolerance.eta},
           {"j1_delta", tolerance.j1_delta}}}};
  return j.dump(2);
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(json::parse(to_json()).dump()); }

ExperimentConfig default_config(const std::string& experiment) {
  ExperimentConfig c;
  if (experiment == "aging-walls") {
    c.params = ModelParams::walls(0.8);
    c.h_list = {1.25, 1.5, 2.0, 4.0};
  } else if (experiment == "aging-traps") {
    c.params = ModelParams::walls_and_traps(0.8, 0.5, 0.5);
    c.h_list = {1.25, 1.5, 2.0, 4.0};
  } else if (experiment == "subaging") {
    c.params = ModelParams::walls_and_traps(0.8, 0.5, 0.5);
    c.h_list = {0.25, 0.5, 1.0, 2.0, 4.0};
    c.n_list = {1024};
  } else if (experiment == "gap") {
    c.params = ModelParams::walls(0.8);
    c.n_list = {256, 1024, 4096};
    c.h_list = {1.0};
    c.environments = 500;
    c.coupled = true;
  } else if (experiment == "j1") {
    c.params = ModelParams::walls(0.8);
    c.n_list = {256, 1024, 4096};
    c.h_list = {};
    c.environments = 20;
    c.coupled = true;
    c.estimators = {"discrete"};
  } else {
    throw std::invalid_argument("unknown experiment '" + experiment + "'");
  }
  return c;
}

const CurveRow& ExperimentResult::row(const std::string& estimator, long long n, double h) const {
  for (const auto& r : rows)
    if (r.estimator == estimator && r.n == n && r.h == h) return r;
  throw std::out_of_range("ExperimentResult: no row " + estimator + " n=" + std::to_string(n));
}

void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(count);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// aging, walls

namespace {

// Per environment: hits[n_index][h_index] over the environment's replicas.
using EnvHits = std::vector<std::vector<std::uint64_t>>;

ExperimentResult fold_discrete(const ExperimentConfig& c, const std::vector<EnvHits>& per_env,
                               const std::vector<double>& h, const std::string& estimator, ExperimentResult& out) {
  for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
    Tally t{std::vector<std::uint64_t>(h.size(), 0), 0};
    for (std::size_t e = 0; e < per_env.size(); ++e) {
      for (std::size_t k = 0; k < h.size(); ++k) {
        t.hits[k] += per_env[e][ni][k];
        if (c.replicas > 1)
          out.quenched.push_back({c.n_list[ni], e, h[k], double(per_env[e][ni][k]) / double(c.replicas), c.replicas});
      }
      t.trials += c.replicas;
    }
    emit_curves(out, estimator, c.n_list[ni], h, t);
  }
  return out;
}

// Limit replicas: returns one hit vector (over h) per replica; coupled runs
// place them on the environments' bundles instead.
template <class One>
Tally limit_tally(const ExperimentConfig& c, std::uint64_t exp, const std::vector<double>& h, unsigned workers,
                  One&& one) {
  std::vector<std::vector<bool>> res(c.limit_replicas);
  parallel_for(c.limit_replicas, workers, [&](std::size_t i) {
    Stream rng = substream(c.master_seed, exp, limit_env(i), 0);
    res[i] = one(rng);
  });
  Tally t{std::vector<std::uint64_t>(h.size(), 0), 0};
  for (const auto& r : res) {
    for (std::size_t k = 0; k < h.size(); ++k) t.hits[k] += r[k];
    ++t.trials;
  }
  return t;
}

std::vector<bool> walls_limit_events(const AtomicSpeedMeasure& m, const SubordinatorPath& sub0,
                                     const std::vector<double>& h, Stream& rng) {
  std::vector<double> obs{1.0};
  for (double x : h)
    if (x != 1.0) obs.push_back(x);
  std::sort(obs.begin(), obs.end());
  obs.erase(std::unique(obs.begin(), obs.end()), obs.end());
  const LimitPath p = simulate_quasi_diffusion(m, m.start_atom(0.0, rng), obs.back(), obs, rng);
  std::vector<bool> ev;
  for (double x : h) ev.push_back(limit_observables(p, m, sub0, 1.0, x).max_equals_window);
  return ev;
}

}  // namespace

ExperimentResult run_aging_walls(const ExperimentConfig& c, unsigned workers) {
  require_mode(c, Mode::RW, "run_aging_walls");
  const std::vector<double> h = sorted_h(c);
  for (double x : h)
    if (!(x > 1.0)) throw std::invalid_argument("run_aging_walls: h must exceed 1");
  Clock clock;
  ExperimentResult out;
  out.experiment = "aging-walls";

  std::vector<EnvHits> per_env(c.environments);
  std::vector<std::vector<std::uint64_t>> coupled_limit(c.environments);
  const std::size_t limit_per_env = c.coupled ? std::max<std::size_t>(1, c.limit_replicas / c.environments) : 0;
  if (c.wants("discrete") || c.coupled) {
    parallel_for(c.environments, workers, [&](std::size_t e) {
      const EnvSource src(c, kAgingWalls, e);
      EnvHits hits(c.n_list.size(), std::vector<std::uint64_t>(h.size(), 0));
      if (c.wants("discrete")) {
        for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
          const long long n = c.n_list[ni];
          const ScaleSet sc = scaling_terms(c.params, n);
          const Environment env = src.environment(n, e);
          const WalkKernel kernel = make_kernel(env, c);
          for (std::size_t r = 0; r < c.replicas; ++r) {
            Stream rng = substream(c.master_seed, kAgingWalls, e, walk_word(n, r));
            ChainWalker w(kernel, 0, rng);
            w.advance(poisson(sc.a_n, rng));
            const long long m1 = w.running_max();
            w.mark();
            double t_prev = 1.0;
            for (std::size_t k = 0; k < h.size(); ++k) {
              w.advance(poisson((h[k] - t_prev) * sc.a_n, rng));
              t_prev = h[k];
              if (w.segment_max() == m1) {
                ++hits[ni][k];
              } else if (w.segment_max() > m1) {
                break;
              }
            }
          }
        }
      }
      per_env[e] = std::move(hits);
      if (c.coupled && c.wants("limit")) {
        const AtomicSpeedMeasure m = walls_measure(src.bundle->sub0, c);
        const SubordinatorPath s = src.bundle->sub0.with_lambda(c.params.lambda);
        std::vector<std::uint64_t> lh(h.size(), 0);
        for (std::size_t j = 0; j < limit_per_env; ++j) {
          Stream rng = substream(c.master_seed, kAgingWalls, e, coupled_limit_word(j));
          const auto ev = walls_limit_events(m, s, h, rng);
          for (std::size_t k = 0; k < h.size(); ++k) lh[k] += ev[k];
        }
        coupled_limit[e] = std::move(lh);
      }
    });
  }
  if (c.wants("discrete")) fold_discrete(c, per_env, h, "discrete", out);
  if (c.wants("limit")) {
    Tally t{std::vector<std::uint64_t>(h.size(), 0), 0};
    if (c.coupled) {
      for (const auto& lh : coupled_limit) {
        for (std::size_t k = 0; k < h.size(); ++k) t.hits[k] += lh[k];
        t.trials += limit_per_env;
      }
    } else {
      t = limit_tally(c, kAgingWalls, h, workers, [&](Stream& rng) {
        const SubordinatorPath s = fresh_sub0(c, rng);
        return walls_limit_events(walls_measure(s, c), s, h, rng);
      });
    }
    emit_curves(out, "limit", 0, h, t);
  }
  out.wall_seconds = clock.seconds();
  return out;
}

// ---------------------------------------------------------------------------
// aging, traps

namespace {

AtomicSpeedMeasure traps_measure(const ExperimentConfig& c, Stream& rng, SubordinatorPath* sub0_out = nullptr) {
  const double K = static_cast<double>(c.K);
  while (true) {
    SubordinatorPath s0 = sample_subordinator(c.params.alpha0, K, c.epsilon0, rng, Tilt::Decreasing, c.params.lambda);
    const SubordinatorPath si =
        sample_subordinator(*c.params.alpha_inf, K, c.weight_cutoff, rng, Tilt::Increasing, c.params.lambda);
    AtomicSpeedMeasure m = build_speed_measure_traps(s0, si, c.params.lambda, K, c.weight_cutoff);
    // the walk starts at 0, which must lie between two traps
    if (m.size() < 2 || m.atoms().front().x > 0.0 || m.atoms().back().x < 0.0) continue;
    if (sub0_out) *sub0_out = std::move(s0);
    return m;
  }
}

}  // namespace

ExperimentResult run_aging_traps(const ExperimentConfig& c, unsigned workers) {
  require_mode(c, Mode::RWT, "run_aging_traps");
  const std::vector<double> h = sorted_h(c);
  for (double x : h)
    if (!(x > 1.0)) throw std::invalid_argument("run_aging_traps: h must exceed 1");
  Clock clock;
  ExperimentResult out;
  out.experiment = "aging-traps";
  if (c.wants("discrete")) {
    std::vector<EnvHits> per_env(c.environments);
    parallel_for(c.environments, workers, [&](std::size_t e) {
      const EnvSource src(c, kAgingTraps, e);
      EnvHits hits(c.n_list.size(), std::vector<std::uint64_t>(h.size(), 0));
      for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
        const long long n = c.n_list[ni];
        const ScaleSet sc = scaling_terms(c.params, n);
        const Environment env = src.environment(n, e);
        const WalkKernel kernel = make_kernel(env, c);
        for (std::size_t r = 0; r < c.replicas; ++r) {
          Stream rng = substream(c.master_seed, kAgingTraps, e, walk_word(n, r));
          ChainWalker w(kernel, 0, rng);
          w.advance(poisson(sc.b_n, rng));
          const long long x1 = w.position();
          double t_prev = 1.0;
          for (std::size_t k = 0; k < h.size(); ++k) {
            w.advance(poisson((h[k] - t_prev) * sc.b_n, rng));
            t_prev = h[k];
            hits[ni][k] += std::llabs(w.position() - x1) <= 1;
          }
        }
      }
      per_env[e] = std::move(hits);
    });
    fold_discrete(c, per_env, h, "discrete", out);
  }
  if (c.wants("limit")) {
    const Tally t = limit_tally(c, kAgingTraps, h, workers, [&](Stream& rng) {
      const AtomicSpeedMeasure m = traps_measure(c, rng);
      std::vector<double> obs{1.0};
      obs.insert(obs.end(), h.begin(), h.end());
      const LimitPath p = simulate_quasi_diffusion(m, m.start_atom(0.0, rng), obs.back(), obs, rng);
      std::vector<bool> ev;
      for (std::size_t k = 0; k < h.size(); ++k) ev.push_back(p.obs[0].atom == p.obs[k + 1].atom);
      return ev;
    });
    emit_curves(out, "limit", 0, h, t);
  }
  out.wall_seconds = clock.seconds();
  return out;
}

// ---------------------------------------------------------------------------
// sub-aging

ExperimentResult run_subaging(const ExperimentConfig& c, unsigned workers) {
  require_mode(c, Mode::RWT, "run_subaging");
  const std::vector<double> h = sorted_h(c);
  for (double x : h)
    if (!(x > 0.0)) throw std::invalid_argument("run_subaging: h must be positive");
  Clock clock;
  ExperimentResult out;
  out.experiment = "subaging";
  if (c.wants("discrete")) {
    struct EnvOut {
      EnvHits window, tail;
      long long mismatches = 0;
      std::vector<std::vector<double>> T;
    };
    std::vector<EnvOut> per_env(c.environments);
    parallel_for(c.environments, workers, [&](std::size_t e) {
      const EnvSource src(c, kSubaging, e);
      EnvOut o;
      o.window.assign(c.n_list.size(), std::vector<std::uint64_t>(h.size(), 0));
      o.tail = o.window;
      o.T.resize(c.n_list.size());
      for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
        const long long n = c.n_list[ni];
        const ScaleSet sc = scaling_terms(c.params, n);
        const Environment env = src.environment(n, e);
        const WalkKernel kernel = make_kernel(env, c);
        WalkOptions opt;
        opt.collapse = c.collapse;
        opt.collapse_ratio = c.collapse_ratio;
        opt.stop_after_distinct = 2;
        std::vector<double> obs{0.0};
        for (double x : h) obs.push_back(x * sc.d_ninf);
        for (std::size_t r = 0; r < c.replicas; ++r) {
          Stream rng = substream(c.master_seed, kSubaging, e, walk_word(n, r));
          ChainWalker w(kernel, 0, rng);
          w.advance(poisson(sc.b_n, rng));
          const WalkPath path = simulate_walk(kernel, w.position(), obs.back(), obs, opt, rng);
          double T = 0.0;
          for (std::size_t k = 0; k < h.size(); ++k) {
            ObservableSpec spec;
            spec.shift = 0.0;
            spec.h = h[k];
            const WalkObservables wo = walk_observables(path, env, sc, spec);
            T = *wo.T_n;
            o.window[ni][k] += *wo.window_range_ok;
            o.tail[ni][k] += T >= h[k];
            o.mismatches += *wo.window_range_ok != (T >= h[k]);
          }
          o.T[ni].push_back(T);
        }
      }
      per_env[e] = std::move(o);
    });
    long long mismatches = 0;
    std::vector<EnvHits> win(c.environments), tail(c.environments);
    for (std::size_t e = 0; e < c.environments; ++e) {
      win[e] = per_env[e].window;
      tail[e] = per_env[e].tail;
      mismatches += per_env[e].mismatches;
      for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
        auto& s = out.samples["T_n=" + std::to_string(c.n_list[ni])];
        s.insert(s.end(), per_env[e].T[ni].begin(), per_env[e].T[ni].end());
      }
    }
    fold_discrete(c, win, h, "window", out);
    ExperimentResult tails;
    fold_discrete(c, tail, h, "escape_tail", tails);
    out.rows.insert(out.rows.end(), tails.rows.begin(), tails.rows.end());
    out.counters["window_tail_mismatches"] = mismatches;
  }
  if (c.wants("limit")) {
    ThetaBarOptions opt;
    opt.K = static_cast<double>(c.K);
    opt.epsilon0 = c.epsilon0;
    opt.weight_cutoff = c.weight_cutoff;
    std::vector<TrapTriple> triples(c.limit_replicas);
    parallel_for(c.limit_replicas, workers, [&](std::size_t i) {
      Stream rng = substream(c.master_seed, kSubaging, limit_env(i), 0);
      triples[i] = sample_trap_triple(c.params, rng, opt);
    });
    for (double x : h) {
      std::vector<double> v;
      v.reserve(triples.size());
      for (const auto& t : triples) v.push_back(std::exp(-x * (t.a0 + t.a2) / (2.0 * t.a1)));
      out.rows.push_back({"theta_bar", 0, x, mean_estimate(v), {}});
    }
  }
  out.wall_seconds = clock.seconds();
  return out;
}

// ---------------------------------------------------------------------------
// Gap

std::vector<double> limit_gap_samples(const ExperimentConfig& c, std::size_t count, std::uint64_t stream_tag,
                                      std::size_t* sentinels, unsigned workers) {
  std::vector<GapValue> g(count);
  parallel_for(count, workers, [&](std::size_t i) {
    Stream rng = substream(c.master_seed, stream_tag, limit_env(i), 0);
    const SubordinatorPath s = fresh_sub0(c, rng);
    const AtomicSpeedMeasure m = walls_measure(s, c);
    const LimitPath p = simulate_quasi_diffusion(m, m.start_atom(0.0, rng), 1.0, {1.0}, rng);
    g[i] = limit_gap(p, m, s, 1.0, rng);
  });
  std::vector<double> out;
  std::size_t sent = 0;
  for (const auto& v : g) {
    if (v.sentinel) {
      ++sent;
    } else {
      out.push_back(v.value);
    }
  }
  if (sentinels) *sentinels = sent;
  return out;
}

ExperimentResult run_gap(const ExperimentConfig& c, unsigned workers) {
  require_mode(c, Mode::RW, "run_gap");
  Clock clock;
  ExperimentResult out;
  out.experiment = "gap";
  const std::size_t limit_per_env = c.coupled ? std::max<std::size_t>(1, c.limit_replicas / c.environments) : 0;
  struct EnvOut {
    std::vector<std::vector<GapValue>> discrete;  // per n, per replica
    std::vector<GapValue> limit;
  };
  std::vector<EnvOut> per_env(c.environments);
  parallel_for(c.environments, workers, [&](std::size_t e) {
    const EnvSource src(c, kGap, e);
    EnvOut o;
    o.discrete.resize(c.n_list.size());
    for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
      const long long n = c.n_list[ni];
      const ScaleSet sc = scaling_terms(c.params, n);
      const Environment env = src.environment(n, e);
      const WalkKernel kernel = make_kernel(env, c);
      for (std::size_t r = 0; r < c.replicas; ++r) {
        Stream rng = substream(c.master_seed, kGap, e, walk_word(n, r));
        ChainWalker w(kernel, 0, rng);
        w.advance(poisson(sc.a_n, rng));
        o.discrete[ni].push_back(gap_at(env, sc, w.running_max()));
      }
    }
    if (c.coupled && c.wants("limit")) {
      const AtomicSpeedMeasure m = walls_measure(src.bundle->sub0, c);
      const SubordinatorPath s = src.bundle->sub0.with_lambda(c.params.lambda);
      for (std::size_t j = 0; j < limit_per_env; ++j) {
        Stream rng = substream(c.master_seed, kGap, e, coupled_limit_word(j));
        const LimitPath p = simulate_quasi_diffusion(m, m.start_atom(0.0, rng), 1.0, {1.0}, rng);
        o.limit.push_back(limit_gap(p, m, s, 1.0, rng));
      }
    }
    per_env[e] = std::move(o);
  });

  std::vector<double> limit;
  std::size_t limit_sent = 0, limit_total = 0;
  if (c.wants("limit")) {
    if (c.coupled) {
      for (const auto& o : per_env)
        for (const auto& g : o.limit) {
          ++limit_total;
          if (g.sentinel) {
            ++limit_sent;
          } else {
            limit.push_back(g.value);
          }
        }
    } else {
      limit = limit_gap_samples(c, c.limit_replicas, kGap, &limit_sent, workers);
      limit_total = c.limit_replicas;
    }
    out.samples["limit"] = limit;
  }
  const std::optional<Ecdf> limit_ecdf = limit.empty() ? std::nullopt : std::optional<Ecdf>(Ecdf(limit));
  for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
    std::vector<double> vals;
    std::size_t sent = 0, total = 0;
    for (const auto& o : per_env)
      for (const auto& g : o.discrete[ni]) {
        ++total;
        if (g.sentinel) {
          ++sent;
        } else {
          vals.push_back(g.value);
        }
      }
    const double frac = static_cast<double>(sent) / static_cast<double>(total);
    const EstimateResult mean = vals.empty() ? EstimateResult{} : mean_estimate(vals);
    out.rows.push_back({"gap_mean", c.n_list[ni], 1.0, mean, frac});
    if (!vals.empty() && limit_ecdf) {
      const double ks = ks_distance(Ecdf(vals), *limit_ecdf);
      EstimateResult r;
      r.estimate = ks;
      r.replicas = vals.size();
      r.ci_lo = r.ci_hi = ks;
      out.rows.push_back({"gap_ks", c.n_list[ni], 1.0, r, frac});
    }
    out.samples["n=" + std::to_string(c.n_list[ni])] = std::move(vals);
  }
  if (c.wants("limit") && !limit.empty()) {
    out.rows.push_back({"gap_mean", 0, 1.0, mean_estimate(limit),
                        static_cast<double>(limit_sent) / static_cast<double>(limit_total)});
  }
  out.wall_seconds = clock.seconds();
  return out;
}

// ---------------------------------------------------------------------------
// J1 diagnostic

namespace {

// Rescaled resistance process on [-K, K] mapped affinely onto [0, 1].
CadlagPath lattice_path(const Environment& env, const ScaleSet& sc) {
  const RescaledProcesses rp = rescaled_processes(env, sc);
  const long long n = env.n(), K = env.K();
  std::vector<double> t, v;
  for (long long k = -K * n; k < K * n; ++k) {
    t.push_back(static_cast<double>(k + K * n) / static_cast<double>(2 * K * n));
    v.push_back(rp.s0.at_index(k));
  }
  return CadlagPath::step(std::move(t), std::move(v));
}

CadlagPath subordinator_path(const SubordinatorPath& s, double K) {
  std::vector<double> t{0.0}, a{s(-K)}, b;
  const auto [lo, hi] = s.atoms_in(-K, K);
  for (std::size_t i = lo; i < hi; ++i) {
    const double u = s.atoms()[i].u;
    if (u >= K) break;
    b.push_back(s.left_limit(u));
    t.push_back((u + K) / (2.0 * K));
    a.push_back(s(u));
  }
  b.push_back(s.left_limit(K));
  return CadlagPath(std::move(t), std::move(a), std::move(b));
}

}  // namespace

ExperimentResult run_j1(const ExperimentConfig& c, unsigned workers) {
  require_mode(c, Mode::RW, "run_j1");
  if (!c.coupled) throw std::invalid_argument("run_j1: needs coupled environments");
  Clock clock;
  ExperimentResult out;
  out.experiment = "j1";
  struct EnvOut {
    std::vector<J1Bound> bounds;
  };
  std::vector<EnvOut> per_env(c.environments);
  parallel_for(c.environments, workers, [&](std::size_t e) {
    const EnvSource src(c, kJ1, e);
    const double K = static_cast<double>(c.K);
    const SubordinatorPath s = src.bundle->sub0.with_lambda(c.params.lambda);
    std::vector<double> sizes;
    const auto [lo, hi] = s.atoms_in(-K, K);
    for (std::size_t i = lo; i < hi; ++i) sizes.push_back(s.tilted_jump(i));
    const double delta = separated_threshold(sizes, c.tolerance.j1_delta);
    const CadlagPath g = subordinator_path(s, K);
    EnvOut o;
    for (long long n : c.n_list) {
      const ScaleSet sc = scaling_terms(c.params, n);
      const Environment env = src.environment(n, e);
      o.bounds.push_back(j1_upper_bound(lattice_path(env, sc), g, delta));
    }
    per_env[e] = std::move(o);
  });
  for (std::size_t ni = 0; ni < c.n_list.size(); ++ni) {
    std::vector<double> v;
    long long failures = 0;
    for (const auto& o : per_env) {
      if (o.bounds[ni].ok) {
        v.push_back(o.bounds[ni].value);
      } else {
        ++failures;
      }
    }
    out.counters["j1_failures_n=" + std::to_string(c.n_list[ni])] = failures;
    if (!v.empty()) out.rows.push_back({"j1", c.n_list[ni], 0.0, mean_estimate(v), {}});
    out.samples["n=" + std::to_string(c.n_list[ni])] = std::move(v);
  }
  out.wall_seconds = clock.seconds();
  return out;
}

ExperimentResult run_experiment(const std::string& name, const ExperimentConfig& c, unsigned workers) {
  if (name == "aging-walls") return run_aging_walls(c, workers);
  if (name == "aging-traps") return run_aging_traps(c, workers);
  if (name == "subaging") return run_subaging(c, workers);
  if (name == "gap") return run_gap(c, workers);
  if (name == "j1") return run_j1(c, workers);
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

// ---------------------------------------------------------------------------
// output

OutputFormat format_from_string(const std::string& text) {
  if (text == "csv") return OutputFormat::Csv;
  if (text == "jsonl") return OutputFormat::Jsonl;
  throw std::invalid_argument("unknown format '" + text + "'");
}

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string n_label(long long n) { return n == 0 ? "inf" : std::to_string(n); }

}  // namespace

std::string curves_csv(const ExperimentResult& r) {
  std::ostringstream out;
  out << "estimator,n,h,estimate,stderr,ci_lo,ci_hi,replicas,sentinel_fraction\n";
  for (const auto& row : r.rows) {
    const auto& e = row.estimate;
    out << row.estimator << ',' << n_label(row.n) << ',' << num(row.h) << ',' << num(e.estimate) << ','
        << num(e.stderr_) << ',' << num(e.ci_lo) << ',' << num(e.ci_hi) << ',' << e.replicas << ','
        << (row.sentinel_fraction ? num(*row.sentinel_fraction) : "") << '\n';
  }
  return out.str();
}

std::string curves_jsonl(const ExperimentResult& r) {
  std::ostringstream out;
  for (const auto& row : r.rows) {
    const auto& e = row.estimate;
    json j{{"estimator", row.estimator}, {"n", n_label(row.n)}, {"h", row.h},         {"estimate", e.estimate},
           {"stderr", e.stderr_},        {"ci_lo", e.ci_lo},    {"ci_hi", e.ci_hi}, {"replicas", e.replicas}};
    j["sentinel_fraction"] = row.sentinel_fraction ? json(*row.sentinel_fraction) : json(nullptr);
    out << j.dump() << '\n';
  }
  return out.str();
}

void write_outputs(const ExperimentResult& r, const ExperimentConfig& c, const std::string& out_dir,
                   OutputFormat format) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + name);
    f << text;
  };
  write(format == OutputFormat::Csv ? "curves.csv" : "curves.jsonl",
        format == OutputFormat::Csv ? curves_csv(r) : curves_jsonl(r));
  if (!r.quenched.empty()) {
    std::ostringstream q;
    q << "n,environment,h,estimate,replicas\n";
    for (const auto& row : r.quenched)
      q << row.n << ',' << row.environment << ',' << num(row.h) << ',' << num(row.estimate) << ',' << row.replicas
        << '\n';
    write("quenched.csv", q.str());
  }
  if (!r.samples.empty()) {
    std::ostringstream s;
    s << "sample,value\n";
    for (const auto& [name, values] : r.samples)
      for (double v : values) s << name << ',' << num(v) << '\n';
    write("samples.csv", s.str());
  }
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(c.hash()));
  json meta{{"experiment", r.experiment},
            {"config_hash", hash},
            {"master_seed", c.master_seed},
            {"version", kVersion},
            {"wall_clock_seconds", r.wall_seconds},
            {"counters", r.counters},
            {"config", json::parse(c.to_json())}};
  write("meta.json", meta.dump(2) + "\n");
}

}  // namespace rcm
