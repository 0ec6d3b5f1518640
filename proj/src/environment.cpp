#include "rcm/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace rcm {

Environment::Environment(ModelParams params, long long n, long long K, std::vector<double> conductances,
                         std::optional<std::uint64_t> seed)
    : params_(params), n_(n), K_(K), c_(std::move(conductances)), seed_(seed) {
  if (n < 1 || K < 1) throw std::invalid_argument("Environment: need n >= 1 and K >= 1");
  if (c_.size() != static_cast<std::size_t>(2 * K * n))
    throw std::invalid_argument("Environment: expected 2Kn conductances");
  for (double v : c_)
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("Environment: conductances must be positive and finite");
  rebuild();
}

void Environment::rebuild() {
  c_tilted_.resize(c_.size());
  const double k = 2.0 * params_.lambda / static_cast<double>(n_);
  for (std::size_t j = 0; j < c_.size(); ++j) {
    const long long i = first_edge() + static_cast<long long>(j);
    c_tilted_[j] = params_.lambda == 0.0 ? c_[j] : c_[j] * std::exp(k * static_cast<double>(i));
  }
  r_prefix_.assign(c_.size() + 1, 0.0);
  long double acc = 0.0L;
  for (std::size_t j = 0; j < c_.size(); ++j) {
    acc += 1.0L / c_tilted_[j];
    r_prefix_[j + 1] = static_cast<double>(acc);
  }
}

double Environment::site_weight(long long x) const {
  if (!has_site(x)) throw std::out_of_range("site_weight: site outside window");
  double w = 0.0;
  if (has_edge(x - 1)) w += c_tilt(x - 1);
  if (has_edge(x)) w += c_tilt(x);
  return w;
}

double Environment::p_right(long long x) const {
  if (!has_site(x)) throw std::out_of_range("p_right: site outside window");
  if (x == min_site()) return 1.0;
  if (x == max_site()) return 0.0;
  const double left = c_tilt(x - 1);
  const double right = c_tilt(x);
  return right / (left + right);
}

Environment Environment::with_edge(long long i, double conductance) const {
  if (!has_edge(i)) throw std::out_of_range("with_edge: edge outside window");
  std::vector<double> c = c_;
  c[index(i)] = conductance;
  return Environment(params_, n_, K_, std::move(c), seed_);
}

Environment generate_environment(const ModelParams& params, long long n, long long K, Stream& rng) {
  params.validate();
  if (n < 1 || K < 1) throw std::invalid_argument("generate_environment: need n >= 1 and K >= 1");
  std::vector<double> c(static_cast<std::size_t>(2 * K * n));
  for (auto& v : c) v = sample_edge_law(params, rng).c;
  return Environment(params, n, K, std::move(c));
}

Environment generate_environment(const ModelParams& params, long long n, long long K, std::uint64_t seed) {
  Stream rng(SeedKey::hash({seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(K)}));
  Environment env = generate_environment(params, n, K, rng);
  return Environment(params, n, K, env.conductances(), seed);
}

double effective_resistance(const Environment& env, long long i, long long j) {
  if (!env.has_site(i) || !env.has_site(j)) throw std::out_of_range("effective_resistance: index outside window");
  if (i == j) return 0.0;
  if (j < i) std::swap(i, j);
  if (j - i <= 64) {
    double sum = 0.0;
    for (long long k = i; k < j; ++k) sum += env.r_tilt(k);
    return sum;
  }
  return env.resistance_prefix(j) - env.resistance_prefix(i);
}

double hitting_probability_exact(const Environment& env, long long x, long long a, long long b) {
  if (a == b) throw std::invalid_argument("hitting_probability_exact: degenerate interval");
  if (!(a < x && x < b)) throw std::invalid_argument("hitting_probability_exact: need a < x < b");
  return effective_resistance(env, a, x) / effective_resistance(env, a, b);
}

PointMeasure::PointMeasure(std::vector<PointAtom> atoms) : atoms_(std::move(atoms)) {
  std::sort(atoms_.begin(), atoms_.end(),
            [](const PointAtom& a, const PointAtom& b) { return a.location < b.location; });
  for (std::size_t k = 0; k < atoms_.size(); ++k) {
    if (!(atoms_[k].weight > 0.0)) throw std::invalid_argument("PointMeasure: weights must be positive");
    if (k > 0 && !(atoms_[k].location > atoms_[k - 1].location))
      throw std::invalid_argument("PointMeasure: locations must be distinct");
  }
}

double PointMeasure::total_mass() const {
  double s = 0.0;
  for (const auto& a : atoms_) s += a.weight;
  return s;
}

std::vector<PointAtom> PointMeasure::in_rectangle(double x1, double x2, double w) const {
  std::vector<PointAtom> out;
  auto it = std::lower_bound(atoms_.begin(), atoms_.end(), x1,
                             [](const PointAtom& a, double v) { return a.location < v; });
  for (; it != atoms_.end() && it->location <= x2; ++it)
    if (it->weight >= w) out.push_back(*it);
  return out;
}

LatticeStepFunction::LatticeStepFunction(long long n, long long k_min, std::vector<double> values)
    : n_(n), k_min_(k_min), values_(std::move(values)) {
  if (n < 1 || values_.empty()) throw std::invalid_argument("LatticeStepFunction: bad lattice");
}

double LatticeStepFunction::operator()(double t) const {
  const double nt = t * static_cast<double>(n_);
  long long k = static_cast<long long>(t >= 0.0 ? std::floor(nt) : std::ceil(nt));
  k = std::clamp(k, k_min(), k_max());
  return at_index(k);
}

RescaledProcesses rescaled_processes(const Environment& env, const ScaleSet& scales) {
  if (scales.n != env.n()) throw std::invalid_argument("rescaled_processes: scale n does not match environment");
  const long long kmin = env.min_site();
  const long long kmax = env.max_site();
  const std::size_t sites = static_cast<std::size_t>(kmax - kmin + 1);
  RescaledProcesses out;

  std::vector<double> s0(sites);
  for (long long k = kmin; k <= kmax; ++k) {
    const double R = k >= 0 ? effective_resistance(env, 0, k) : -effective_resistance(env, k, 0);
    s0[static_cast<std::size_t>(k - kmin)] = R / scales.d_n0;
  }
  out.s0 = LatticeStepFunction(env.n(), kmin, std::move(s0));

  std::vector<PointAtom> nu0;
  nu0.reserve(env.edge_count());
  const double nn = static_cast<double>(env.n());
  for (long long i = env.first_edge(); i <= env.last_edge(); ++i)
    nu0.push_back({static_cast<double>(i) / nn, env.r(i) / scales.d_n0});
  out.nu0 = PointMeasure(std::move(nu0));

  if (env.params().mode == Mode::RWT) {
    std::vector<double> prefix(env.edge_count() + 1, 0.0);
    long double acc = 0.0L;
    for (std::size_t j = 0; j < env.edge_count(); ++j) {
      acc += env.c_tilt(env.first_edge() + static_cast<long long>(j));
      prefix[j + 1] = static_cast<double>(acc);
    }
    const double at0 = prefix[static_cast<std::size_t>(-kmin)];
    std::vector<double> sinf(sites);
    for (std::size_t j = 0; j < sites; ++j) sinf[j] = (prefix[j] - at0) / scales.d_ninf;
    out.sinf = LatticeStepFunction(env.n(), kmin, std::move(sinf));

    std::vector<PointAtom> nuinf;
    nuinf.reserve(env.edge_count());
    for (long long i = env.first_edge(); i <= env.last_edge(); ++i)
      nuinf.push_back({static_cast<double>(i) / nn, env.c(i) / scales.d_ninf});
    out.nuinf = PointMeasure(std::move(nuinf));
  }
  return out;
}

WallTrapSets wall_trap_sets(const Environment& env, const ScaleSet& scales, double delta_hat) {
  if (!(delta_hat > 0.0 && delta_hat < 1.0)) throw std::invalid_argument("wall_trap_sets: delta_hat must lie in (0, 1)");
  WallTrapSets out;
  const double wall_level = std::exp((1.0 - delta_hat) * scales.log_d_n0);
  const bool traps = env.params().mode == Mode::RWT;
  const double trap_level = traps ? std::exp((1.0 - delta_hat) * scales.log_d_ninf) : 0.0;
  for (long long j = env.first_edge(); j <= env.last_edge(); ++j) {
    if (env.r(j) > wall_level) out.walls.push_back(j);
    if (traps && env.c(j) > trap_level) out.traps.push_back(j);
  }
  std::vector<long long> all = out.walls;
  all.insert(all.end(), out.traps.begin(), out.traps.end());
  std::sort(all.begin(), all.end());
  const double spacing = std::pow(static_cast<double>(env.n()), 0.25);
  for (std::size_t k = 1; k < all.size(); ++k)
    if (!(static_cast<double>(all[k] - all[k - 1]) > spacing)) out.separated = false;
  return out;
}

std::string environment_to_jsonl(const Environment& env) {
  const ModelParams& p = env.params();
  nlohmann::json j;
  if (env.seed())
    j["seed"] = *env.seed();
  else
    j["seed"] = nullptr;
  j["n"] = env.n();
  j["K"] = env.K();
  j["mode"] = to_string(p.mode);
  nlohmann::json params{{"alpha0", p.alpha0}, {"lambda", p.lambda}, {"p", p.p}};
  params["alpha_inf"] = p.alpha_inf ? nlohmann::json(*p.alpha_inf) : nlohmann::json(nullptr);
  j["params"] = params;
  j["edges"] = env.conductances();
  return j.dump();
}

Environment environment_from_jsonl(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  ModelParams p;
  p.mode = mode_from_string(j.at("mode").get<std::string>());
  const auto& q = j.at("params");
  p.alpha0 = q.at("alpha0").get<double>();
  p.lambda = q.at("lambda").get<double>();
  p.p = q.at("p").get<double>();
  if (!q.at("alpha_inf").is_null()) p.alpha_inf = q.at("alpha_inf").get<double>();
  p.validate();
  std::optional<std::uint64_t> seed;
  if (!j.at("seed").is_null()) seed = j.at("seed").get<std::uint64_t>();
  return Environment(p, j.at("n").get<long long>(), j.at("K").get<long long>(),
                     j.at("edges").get<std::vector<double>>(), seed);
}

}  // namespace rcm
