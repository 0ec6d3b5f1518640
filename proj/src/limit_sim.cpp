#include "rcm/limit_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rcm {

AtomicSpeedMeasure::AtomicSpeedMeasure(std::vector<SpeedAtom> atoms, double x_lo, double x_hi)
    : atoms_(std::move(atoms)), x_lo_(x_lo), x_hi_(x_hi) {
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (!(atoms_[i].m > 0.0)) throw std::invalid_argument("AtomicSpeedMeasure: masses must be positive");
    if (i > 0 && !(atoms_[i].x > atoms_[i - 1].x))
      throw std::invalid_argument("AtomicSpeedMeasure: positions must increase strictly");
    if (i > 0 && atoms_[i].v < atoms_[i - 1].v)
      throw std::invalid_argument("AtomicSpeedMeasure: preimages must be nondecreasing");
  }
}

double AtomicSpeedMeasure::total_mass() const {
  double s = 0.0;
  for (const auto& a : atoms_) s += a.m;
  return s;
}

double AtomicSpeedMeasure::green(std::size_t i) const {
  const std::size_t last = atoms_.size() - 1;
  if (atoms_.size() == 1) return std::numeric_limits<double>::infinity();
  if (i == 0) return 2.0 * (atoms_[1].x - atoms_[0].x);
  if (i == last) return 2.0 * (atoms_[last].x - atoms_[last - 1].x);
  const double dm = atoms_[i].x - atoms_[i - 1].x;
  const double dp = atoms_[i + 1].x - atoms_[i].x;
  return 2.0 * dm * dp / (dm + dp);
}

double AtomicSpeedMeasure::p_left(std::size_t i) const {
  if (i == 0) return 0.0;
  if (i == atoms_.size() - 1) return 1.0;
  const double dm = atoms_[i].x - atoms_[i - 1].x;
  const double dp = atoms_[i + 1].x - atoms_[i].x;
  return dp / (dm + dp);
}

std::size_t AtomicSpeedMeasure::start_atom(double x, Stream& rng) const {
  if (atoms_.empty()) throw std::invalid_argument("start_atom: empty measure");
  if (x < atoms_.front().x || x > atoms_.back().x) throw std::invalid_argument("start_atom: start outside domain");
  auto it = std::lower_bound(atoms_.begin(), atoms_.end(), x, [](const SpeedAtom& a, double v) { return a.x < v; });
  const std::size_t r = static_cast<std::size_t>(it - atoms_.begin());
  if (it->x == x) return r;
  const double xl = atoms_[r - 1].x, xr = atoms_[r].x;
  return rng.uniform() * (xr - xl) < (xr - x) ? r - 1 : r;
}

std::string AtomicSpeedMeasure::to_json() const {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : atoms_) atoms.push_back({{"v", a.v}, {"x", a.x}, {"mass", a.m}});
  return nlohmann::json{{"x_lo", x_lo_}, {"x_hi", x_hi_}, {"atoms", atoms}}.dump();
}

AtomicSpeedMeasure build_speed_measure_walls(const SubordinatorPath& sub0, double lambda, double K, double grid_step,
                                             double mean_c, const WallsMeasureOptions& options) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("build_speed_measure_walls: grid_step must be positive");
  if (!(K > 0.0) || K > sub0.half_width()) throw std::invalid_argument("build_speed_measure_walls: bad window");
  if (!(mean_c > 0.0)) throw std::invalid_argument("build_speed_measure_walls: mean_c must be positive");
  const SubordinatorPath s = sub0.lambda() == lambda ? sub0 : sub0.with_lambda(lambda);
  const long long cells = static_cast<long long>(std::llround(K / grid_step));
  std::vector<double> cuts;
  cuts.reserve(static_cast<std::size_t>(2 * cells + 1));
  for (long long k = -cells; k <= cells; ++k) cuts.push_back(static_cast<double>(k) * grid_step);
  cuts.front() = -K;
  cuts.back() = K;
  // a resolved jump replaces the grid points within half a step of it
  std::vector<double> resolved;
  for (const Jump& j : s.atoms())
    if (j.w > options.resolve_jumps_above && j.u > -K && j.u < K) resolved.push_back(j.u);
  if (!resolved.empty()) {
    std::erase_if(cuts, [&](double v) {
      if (v == -K || v == K) return false;
      const auto it = std::lower_bound(resolved.begin(), resolved.end(), v - 0.5 * grid_step);
      return it != resolved.end() && *it <= v + 0.5 * grid_step;
    });
    cuts.insert(cuts.end(), resolved.begin(), resolved.end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  }

  auto tilt_integral = [&](double a, double b) {
    if (lambda == 0.0) return b - a;
    const double k2 = 2.0 * lambda;
    return std::exp(k2 * a) * std::expm1(k2 * (b - a)) / k2;
  };
  std::vector<SpeedAtom> atoms;
  atoms.reserve(cuts.size());
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    const double mass = options.density_factor * mean_c * tilt_integral(a, b);
    atoms.push_back({s.left_limit(b), mass, b});
  }
  return AtomicSpeedMeasure(std::move(atoms), s.left_limit(-K), s(K));
}

AtomicSpeedMeasure build_speed_measure_traps(const SubordinatorPath& sub0, const SubordinatorPath& subinf,
                                             double lambda, double K, double weight_cutoff) {
  if (subinf.epsilon() > weight_cutoff)
    throw std::invalid_argument("build_speed_measure_traps: truncation must not exceed the weight cutoff");
  if (K > sub0.half_width() || K > subinf.half_width())
    throw std::invalid_argument("build_speed_measure_traps: window larger than the paths");
  const SubordinatorPath s = sub0.lambda() == lambda ? sub0 : sub0.with_lambda(lambda);
  std::vector<SpeedAtom> atoms;
  for (const Jump& j : subinf.atoms()) {
    if (j.u < -K || j.u > K || !(j.w > weight_cutoff)) continue;
    atoms.push_back({s(j.u), std::exp(2.0 * lambda * j.u) * j.w, j.u});
  }
  return AtomicSpeedMeasure(std::move(atoms), s.left_limit(-K), s(K));
}

LimitPath simulate_quasi_diffusion(const AtomicSpeedMeasure& measure, std::size_t start_atom, double t_end,
                                   const std::vector<double>& obs_times, Stream& rng,
                                   const QuasiDiffusionOptions& options) {
  if (measure.size() == 0) throw std::invalid_argument("simulate_quasi_diffusion: empty measure");
  if (start_atom >= measure.size()) throw std::invalid_argument("simulate_quasi_diffusion: start outside domain");
  if (!(t_end > 0.0)) throw std::invalid_argument("simulate_quasi_diffusion: t_end must be positive");
  if (!std::is_sorted(obs_times.begin(), obs_times.end()) || (!obs_times.empty() && obs_times.back() > t_end))
    throw std::invalid_argument("simulate_quasi_diffusion: observation times must be sorted within [0, t_end]");

  const std::size_t n = measure.size();
  LimitPath path;
  path.start = start_atom;
  path.t_end = t_end;
  path.boundary_time = std::numeric_limits<double>::infinity();
  if (n == 1) {
    for (double t : obs_times) path.obs.push_back({t, 0, 0, 0, t});
    path.boundary_time = 0.0;
    return path;
  }
  std::vector<double> hold(n);
  std::vector<std::uint64_t> left(n);
  for (std::size_t i = 0; i < n; ++i) {
    hold[i] = measure.atoms()[i].m * measure.green(i);
    const double pl = measure.p_left(i);
    left[i] = pl >= 1.0 ? (std::uint64_t{1} << 63) : static_cast<std::uint64_t>(pl * 9223372036854775808.0);
  }
  if (options.record_events) {
    path.event_times.push_back(0.0);
    path.atoms.push_back(start_atom);
  }
  std::size_t i = start_atom;
  std::size_t running_max = i, seg_max = i;
  if (i == 0 || i == n - 1) path.boundary_time = 0.0;
  double t = 0.0, max_time = 0.0;
  std::size_t next = 0;
  while (true) {
    const double dt = hold[i] * rng.exponential();
    while (next < obs_times.size() && obs_times[next] < t + dt) {
      const double partial = i == running_max ? obs_times[next] - t : 0.0;
      path.obs.push_back({obs_times[next], i, running_max, seg_max, max_time + partial});
      seg_max = i;
      ++next;
    }
    if (t + dt > t_end) break;
    t += dt;
    if (i == running_max) max_time += dt;
    i = rng.bits63() < left[i] ? i - 1 : i + 1;
    ++path.events;
    if (i > running_max) {
      running_max = i;
      max_time = 0.0;
    }
    seg_max = std::max(seg_max, i);
    if ((i == 0 || i == n - 1) && std::isinf(path.boundary_time)) path.boundary_time = t;
    if (options.record_events) {
      path.event_times.push_back(t);
      path.atoms.push_back(i);
    }
    if (path.events == options.stop_after_events) break;
    if (path.events >= options.max_events) throw std::runtime_error("simulate_quasi_diffusion: event budget exhausted");
  }
  return path;
}

std::string LimitPath::to_csv(const AtomicSpeedMeasure& measure) const {
  std::ostringstream out;
  out.precision(17);
  out << "event_index,time,position\n";
  for (std::size_t k = 0; k < event_times.size(); ++k)
    out << k << ',' << event_times[k] << ',' << measure.atoms()[atoms[k]].v << '\n';
  return out.str();
}

LimitObservables limit_observables(const LimitPath& path, const AtomicSpeedMeasure& measure,
                                   const SubordinatorPath& sub0, double t, double h) {
  auto find = [&](double s) -> std::size_t {
    for (std::size_t k = 0; k < path.obs.size(); ++k)
      if (path.obs[k].time == s) return k;
    throw std::invalid_argument("limit_observables: time is not an observation time");
  };
  const std::size_t k1 = find(t);
  const std::size_t k2 = find(t * h);
  const LimitObs& o1 = path.obs[k1];
  const LimitObs& o2 = path.obs[k2];
  LimitObservables out;
  const auto& atoms = measure.atoms();
  out.z_bar = atoms[o1.running_max].v;
  out.y_bar = atoms[o1.running_max].x;
  out.at_max = o1.atom == o1.running_max;
  out.same_atom = o1.atom == o2.atom;
  out.trap_mass = atoms[o1.atom].m;
  std::size_t window = o1.atom;
  for (std::size_t k = k1 + 1; k <= k2; ++k) window = std::max(window, path.obs[k].segment_max);
  out.max_equals_window = window == o1.running_max;
  return out;
}

GapValue limit_gap(const LimitPath& path, const AtomicSpeedMeasure& measure, const SubordinatorPath& sub0, double t,
                   Stream& rng) {
  const auto it = std::find_if(path.obs.begin(), path.obs.end(), [&](const LimitObs& o) { return o.time == t; });
  if (it == path.obs.end()) throw std::invalid_argument("limit_gap: time is not an observation time");
  const auto& atoms = measure.atoms();
  const std::size_t k = it->running_max;
  if (k + 1 >= atoms.size()) return {true, 0.0};
  const double y = atoms[k].x;
  const double d = atoms[k + 1].x - y;
  const double local = it->max_time / atoms[k].m;
  const double z = local > 0.0 ? 1.0 / (1.0 / d - 2.0 * std::log(rng.uniform_pos()) / local) : 0.0;
  if (const auto j = sub0.jump_containing(y + z)) return {false, sub0.tilted_jump(*j)};
  const double w = sub0.epsilon() * std::pow(rng.uniform_pos(), 1.0 / (1.0 - sub0.alpha()));
  return {false, w * sub0.tilt_factor(atoms[k].v)};
}

TrapTriple sample_trap_triple(const ModelParams& params, Stream& rng, const ThetaBarOptions& options) {
  if (params.mode != Mode::RWT) throw std::invalid_argument("theta_bar_limit: needs the walls-and-traps mode");
  const double ai = *params.alpha_inf;
  while (true) {
    const SubordinatorPath s0 =
        sample_subordinator(params.alpha0, options.K, options.epsilon0, rng, Tilt::Decreasing, params.lambda);
    const SubordinatorPath si = sample_subordinator(ai, options.K, options.weight_cutoff, rng, Tilt::Increasing,
                                                    params.lambda);
    const AtomicSpeedMeasure m = build_speed_measure_traps(s0, si, params.lambda, options.K, options.weight_cutoff);
    if (m.size() < 2 || 0.0 < m.atoms().front().x || 0.0 > m.atoms().back().x) continue;
    const std::size_t start = m.start_atom(0.0, rng);
    const LimitPath p = simulate_quasi_diffusion(m, start, 1.0, {1.0}, rng);
    const double a1 = m.atoms()[p.obs[0].atom].m * std::exp(-2.0 * params.lambda * m.atoms()[p.obs[0].atom].v);
    const double a0 = sample_edge_law(params, rng).c;
    const double a2 = sample_edge_law(params, rng).c;
    return {a0, a1, a2};
  }
}

EstimateResult theta_bar_limit(const ModelParams& params, double h, std::size_t replicas, Stream& rng,
                               const ThetaBarOptions& options) {
  if (replicas == 0) throw std::invalid_argument("theta_bar_limit: need replicas >= 1");
  if (h < 0.0) throw std::invalid_argument("theta_bar_limit: h must be nonnegative");
  std::vector<double> values(replicas);
  for (auto& v : values) {
    const TrapTriple tr = sample_trap_triple(params, rng, options);
    v = h == 0.0 ? 1.0 : std::exp(-h * (tr.a0 + tr.a2) / (2.0 * tr.a1));
  }
  return mean_estimate(values);
}

}  // namespace rcm
