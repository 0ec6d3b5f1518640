#include "rcm/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>

#include <json.hpp>

namespace rcm {

QuantileTable::QuantileTable(double alpha, std::size_t knots) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("QuantileTable: alpha must lie in (0, 1)");
  if (knots < 8) throw std::invalid_argument("QuantileTable: too few knots");
  // left end where the CDF is negligible, right end deep in the power-law tail
  double lo = 1.0;
  while (stable_marginal_cdf(alpha, lo) > 1e-14 && lo > 1e-300) lo /= 4.0;
  double hi = 1.0;
  while (stable_marginal_survival(alpha, hi) > 1e-12) hi *= 16.0;
  const double a = std::log(lo);
  const double b = std::log(hi);
  std::vector<double> xs(knots), ys(knots);
  for (std::size_t k = 0; k < knots; ++k) {
    xs[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(knots - 1);
    const double s = std::exp(xs[k]);
    const double cdf = stable_marginal_cdf(alpha, s);
    ys[k] = cdf < 0.5 ? std::log1p(-cdf) : std::log(stable_marginal_survival(alpha, s));
  }
  for (std::size_t k = 1; k < knots; ++k) ys[k] = std::min(ys[k], ys[k - 1]);
  log_s_ = xs;
  log_surv_ = ys;
  spline_.emplace(std::move(xs), std::move(ys));
}

double QuantileTable::log_survival(double s) const {
  if (!(s > 0.0)) return 0.0;
  const double x = std::log(s);
  if (x <= log_s_.front()) return log_surv_.front() * (x == log_s_.front() ? 1.0 : 0.0);
  if (x >= log_s_.back()) return log_surv_.back() - alpha_ * (x - log_s_.back());
  return std::min(0.0, (*spline_)(x));
}

double QuantileTable::inverse(double s) const {
  return std::max(1.0, std::exp(-log_survival(s) / alpha_));
}

std::uint64_t QuantileTable::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  mix(alpha_);
  for (std::size_t k = 0; k < log_s_.size(); ++k) {
    mix(log_s_[k]);
    mix(log_surv_[k]);
  }
  return h;
}

std::shared_ptr<const QuantileTable> shared_quantile_table(double alpha, std::size_t knots) {
  static std::mutex mutex;
  static std::map<std::pair<double, std::size_t>, std::shared_ptr<const QuantileTable>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{alpha, knots}];
  if (!slot) slot = std::make_shared<const QuantileTable>(alpha, knots);
  return slot;
}

double g_function(double alpha, long long n, double y, const QuantileTable& table, double d_star) {
  if (y < 0.0) throw std::invalid_argument("g_function: y must be nonnegative");
  if (n < 1) throw std::invalid_argument("g_function: n must be >= 1");
  return table.inverse(std::pow(static_cast<double>(n), 1.0 / alpha) * y) / d_star;
}

long long CouplingBundle::star(long long x) const {
  const long long base = K * n_max;
  if (x < -base || x > base) throw std::out_of_range("star: index outside bundle window");
  auto P = [&](long long i) { return ones_prefix[static_cast<std::size_t>(i + base)]; };
  return x >= 0 ? P(x) - P(0) : -(P(0) - P(x + 1));
}

namespace {

void fill_prefix(CouplingBundle& bundle) {
  bundle.ones_prefix.assign(bundle.bern.size() + 1, 0);
  for (std::size_t j = 0; j < bundle.bern.size(); ++j)
    bundle.ones_prefix[j + 1] = bundle.ones_prefix[j] + (bundle.bern[j] ? 1 : 0);
}

}  // namespace

CouplingBundle make_bundle(const ModelParams& params, long long K, long long n_max, std::vector<std::uint8_t> bern,
                           SubordinatorPath sub0, std::optional<SubordinatorPath> subinf, std::size_t knots) {
  params.validate();
  if (K < 1 || n_max < 1) throw std::invalid_argument("make_bundle: need K >= 1 and n_max >= 1");
  if (bern.size() != static_cast<std::size_t>(2 * K * n_max))
    throw std::invalid_argument("make_bundle: thinning sequence must cover the window");
  if (sub0.half_width() < static_cast<double>(K)) throw std::invalid_argument("make_bundle: sub0 window too small");
  const bool any_trap = std::any_of(bern.begin(), bern.end(), [](std::uint8_t v) { return v != 0; });
  if (any_trap && (!subinf || subinf->half_width() < static_cast<double>(K)))
    throw std::invalid_argument("make_bundle: conductance-type edges need a covering subinf");
  CouplingBundle bundle;
  bundle.params = params;
  bundle.K = K;
  bundle.n_max = n_max;
  bundle.bern = std::move(bern);
  bundle.sub0 = std::move(sub0);
  bundle.subinf = std::move(subinf);
  bundle.table0 = shared_quantile_table(bundle.sub0.alpha(), knots);
  if (bundle.subinf) bundle.tableinf = shared_quantile_table(bundle.subinf->alpha(), knots);
  fill_prefix(bundle);
  return bundle;
}

CouplingBundle build_bundle(const ModelParams& params, long long K, long long n_max, std::uint64_t seed,
                            const BundleOptions& options) {
  params.validate();
  const double nn = static_cast<double>(n_max);
  const double kk = static_cast<double>(K);
  Stream rng0(SeedKey::hash({seed, 0}));
  const double eps0 = options.eta * std::pow(nn, -1.0 / params.alpha0);
  SubordinatorPath sub0 = sample_subordinator(params.alpha0, kk, eps0, rng0, Tilt::Decreasing, params.lambda);
  std::optional<SubordinatorPath> subinf;
  std::vector<std::uint8_t> bern(static_cast<std::size_t>(2 * K * n_max), 0);
  if (params.mode == Mode::RWT) {
    const double ai = *params.alpha_inf;
    Stream rng1(SeedKey::hash({seed, 1}));
    subinf = sample_subordinator(ai, kk, options.eta * std::pow(nn, -1.0 / ai), rng1, Tilt::Increasing, params.lambda);
    Stream rng2(SeedKey::hash({seed, 2}));
    for (auto& v : bern) v = rng2.uniform() < params.p ? 1 : 0;
  }
  CouplingBundle bundle = make_bundle(params, K, n_max, std::move(bern), std::move(sub0), std::move(subinf), options.knots);
  bundle.seed = seed;
  bundle.eta = options.eta;
  return bundle;
}

CoupledEnvironment build_coupled_environment(const CouplingBundle& bundle, const ModelParams& params, long long n,
                                             long long K) {
  if (n < 1 || n > bundle.n_max || K < 1 || K > bundle.K)
    throw std::invalid_argument("build_coupled_environment: window outside the bundle");
  const long long lo = -K * n;
  const long long hi = K * n;
  const double nn = static_cast<double>(n);

  // cell index used by each edge
  std::vector<long long> cell(static_cast<std::size_t>(hi - lo));
  long long min0 = std::numeric_limits<long long>::max(), max0 = std::numeric_limits<long long>::min();
  long long mini = min0, maxi = max0;
  for (long long x = lo; x < hi; ++x) {
    const long long xs = bundle.star(x);
    long long k;
    if (bundle.b(x)) {
      k = x >= 0 ? xs : xs - 1;
      mini = std::min(mini, k);
      maxi = std::max(maxi, k);
    } else {
      k = x - xs;
      min0 = std::min(min0, k);
      max0 = std::max(max0, k);
    }
    cell[static_cast<std::size_t>(x - lo)] = k;
  }
  std::vector<double> inc0, incinf;
  if (min0 <= max0) inc0 = bundle.sub0.cell_increments(n, min0, max0 + 1);
  if (mini <= maxi) {
    if (!bundle.subinf) throw std::invalid_argument("build_coupled_environment: missing subinf");
    incinf = bundle.subinf->cell_increments(n, mini, maxi + 1);
  }

  const double scale0 = std::pow(nn, 1.0 / bundle.sub0.alpha());
  const double scaleinf = bundle.subinf ? std::pow(nn, 1.0 / bundle.subinf->alpha()) : 0.0;
  std::vector<double> c(cell.size());
  CoupledEnvironment out;
  std::vector<long long> edge_of_cell0(inc0.size(), std::numeric_limits<long long>::min());
  std::vector<long long> edge_of_cellinf(incinf.size(), std::numeric_limits<long long>::min());
  for (long long x = lo; x < hi; ++x) {
    const std::size_t j = static_cast<std::size_t>(x - lo);
    if (bundle.b(x)) {
      const std::size_t k = static_cast<std::size_t>(cell[j] - mini);
      c[j] = bundle.tableinf->inverse(scaleinf * incinf[k]);
      edge_of_cellinf[k] = x;
    } else {
      const std::size_t k = static_cast<std::size_t>(cell[j] - min0);
      c[j] = 1.0 / bundle.table0->inverse(scale0 * inc0[k]);
      edge_of_cell0[k] = x;
    }
  }
  out.env = Environment(params, n, K, std::move(c));

  auto locate = [&](const SubordinatorPath& path, long long kmin, const std::vector<long long>& edge_of_cell) {
    std::vector<std::optional<long long>> out_edges;
    const double kk = static_cast<double>(K);
    for (const Jump& a : path.atoms()) {
      if (!(a.u > -kk && a.u <= kk)) continue;
      const long long k = static_cast<long long>(std::ceil(a.u * nn)) - 1;
      const long long idx = k - kmin;
      if (idx >= 0 && idx < static_cast<long long>(edge_of_cell.size()) &&
          edge_of_cell[static_cast<std::size_t>(idx)] != std::numeric_limits<long long>::min())
        out_edges.emplace_back(edge_of_cell[static_cast<std::size_t>(idx)]);
      else
        out_edges.emplace_back(std::nullopt);
    }
    return out_edges;
  };
  out.correspondence.edge_of_atom0 = locate(bundle.sub0, min0, edge_of_cell0);
  if (bundle.subinf) out.correspondence.edge_of_atominf = locate(*bundle.subinf, mini, edge_of_cellinf);
  return out;
}

PointMeasure coupled_limit_measure(const CouplingBundle& bundle, bool traps) {
  const SubordinatorPath* path = traps ? (bundle.subinf ? &*bundle.subinf : nullptr) : &bundle.sub0;
  if (!path) throw std::invalid_argument("coupled_limit_measure: bundle has no conductance process");
  double q = 1.0;
  if (bundle.params.mode == Mode::RWT) q = traps ? bundle.params.p : 1.0 - bundle.params.p;
  const double wscale = std::pow(q, -1.0 / path->alpha());
  std::vector<PointAtom> atoms;
  atoms.reserve(path->atoms().size());
  for (const Jump& a : path->atoms()) atoms.push_back({a.u / q, wscale * a.w});
  return PointMeasure(std::move(atoms));
}

double MatchReport::max_displacement() const {
  double d = 0.0;
  for (const auto& m : matches) d = std::max(d, m.displacement());
  return d;
}

MatchReport match_atoms(const PointMeasure& discrete, const PointMeasure& limit, const MatchWindow& window,
                        const MatchTolerance& tol) {
  if (!(window.w_min > 0.0)) throw std::invalid_argument("match_atoms: window must stay away from weight 0");
  MatchReport report;
  const auto& d = discrete.atoms();
  const auto& l = limit.atoms();
  auto inside = [&](const PointAtom& a) {
    return a.location >= window.x1 && a.location <= window.x2 && a.weight >= window.w_min;
  };
  for (const auto& a : d) report.discrete_count += inside(a);
  for (std::size_t i = 0; i < l.size(); ++i) {
    if (!inside(l[i])) continue;
    ++report.limit_count;
    auto it = std::lower_bound(d.begin(), d.end(), l[i].location - tol.location,
                               [](const PointAtom& a, double v) { return a.location < v; });
    std::optional<std::size_t> found;
    bool ambiguous = false;
    for (; it != d.end() && it->location <= l[i].location + tol.location; ++it) {
      if (std::abs(it->weight - l[i].weight) > tol.weight_relative * l[i].weight) continue;
      if (found) ambiguous = true;
      found = static_cast<std::size_t>(it - d.begin());
    }
    if (ambiguous)
      report.failures.emplace_back(i, MatchFailure::Ambiguous);
    else if (!found)
      report.failures.emplace_back(i, MatchFailure::Absent);
    else
      report.matches.push_back({i, *found, std::abs(d[*found].location - l[i].location),
                                std::abs(d[*found].weight - l[i].weight)});
  }
  return report;
}

namespace {

nlohmann::json path_to_json(const SubordinatorPath& s) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const Jump& a : s.atoms()) atoms.push_back({a.u, a.w});
  return {{"alpha", s.alpha()},
          {"K", s.half_width()},
          {"epsilon", s.epsilon()},
          {"tilt", s.tilt() == Tilt::Decreasing ? "decreasing" : "increasing"},
          {"lambda", s.lambda()},
          {"atoms", atoms}};
}

SubordinatorPath path_from_json(const nlohmann::json& j) {
  std::vector<Jump> atoms;
  for (const auto& a : j.at("atoms")) atoms.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
  const Tilt tilt = j.at("tilt").get<std::string>() == "decreasing" ? Tilt::Decreasing : Tilt::Increasing;
  return SubordinatorPath(j.at("alpha").get<double>(), j.at("K").get<double>(), j.at("epsilon").get<double>(),
                          std::move(atoms), tilt, j.at("lambda").get<double>());
}

}  // namespace

std::string bundle_to_json(const CouplingBundle& bundle) {
  const ModelParams& p = bundle.params;
  nlohmann::json j;
  j["params"] = {{"mode", to_string(p.mode)}, {"alpha0", p.alpha0}, {"lambda", p.lambda}, {"p", p.p}};
  j["params"]["alpha_inf"] = p.alpha_inf ? nlohmann::json(*p.alpha_inf) : nlohmann::json(nullptr);
  j["K"] = bundle.K;
  j["n_max"] = bundle.n_max;
  j["seed"] = bundle.seed;
  j["eta"] = bundle.eta;
  std::string bits(bundle.bern.size(), '0');
  for (std::size_t k = 0; k < bits.size(); ++k)
    if (bundle.bern[k]) bits[k] = '1';
  j["bern"] = bits;
  j["sub0"] = path_to_json(bundle.sub0);
  j["subinf"] = bundle.subinf ? path_to_json(*bundle.subinf) : nlohmann::json(nullptr);
  j["knots"] = bundle.table0->knots();
  j["table0_hash"] = bundle.table0->hash();
  j["tableinf_hash"] = bundle.tableinf ? nlohmann::json(bundle.tableinf->hash()) : nlohmann::json(nullptr);
  return j.dump();
}

CouplingBundle bundle_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  const auto& q = j.at("params");
  ModelParams p;
  p.mode = mode_from_string(q.at("mode").get<std::string>());
  p.alpha0 = q.at("alpha0").get<double>();
  p.lambda = q.at("lambda").get<double>();
  p.p = q.at("p").get<double>();
  if (!q.at("alpha_inf").is_null()) p.alpha_inf = q.at("alpha_inf").get<double>();
  const std::string bits = j.at("bern").get<std::string>();
  std::vector<std::uint8_t> bern(bits.size());
  for (std::size_t k = 0; k < bits.size(); ++k) bern[k] = bits[k] == '1';
  std::optional<SubordinatorPath> subinf;
  if (!j.at("subinf").is_null()) subinf = path_from_json(j.at("subinf"));
  CouplingBundle b = make_bundle(p, j.at("K").get<long long>(), j.at("n_max").get<long long>(), std::move(bern),
                                 path_from_json(j.at("sub0")), std::move(subinf), j.at("knots").get<std::size_t>());
  b.seed = j.at("seed").get<std::uint64_t>();
  b.eta = j.at("eta").get<double>();
  if (b.table0->hash() != j.at("table0_hash").get<std::uint64_t>() ||
      (b.tableinf && b.tableinf->hash() != j.at("tableinf_hash").get<std::uint64_t>()))
    throw std::runtime_error("bundle_from_json: rebuilt quantile table does not match the recorded hash");
  return b;
}

}  // namespace rcm
