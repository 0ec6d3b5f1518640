#include "rcm/walk_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace rcm {

namespace {

constexpr double kTwo63 = 9223372036854775808.0;

std::uint64_t to_threshold(double p) {
  if (p >= 1.0) return std::uint64_t{1} << 63;
  if (p <= 0.0) return 0;
  return static_cast<std::uint64_t>(p * kTwo63);
}

// Kahan-compensated clock.
struct Clock {
  double sum = 0.0;
  double carry = 0.0;
  void add(double v) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

WalkKernel::WalkKernel(const Environment& env, double collapse_ratio) : env_(&env), offset_(env.min_site()) {
  const std::size_t n_sites = static_cast<std::size_t>(env.max_site() - env.min_site() + 1);
  thr_.resize(n_sites);
  pair_of_.assign(n_sites, -1);
  std::vector<double> pr(n_sites);
  for (std::size_t i = 0; i < n_sites; ++i) {
    pr[i] = env.p_right(static_cast<long long>(i) + offset_);
    thr_[i] = to_threshold(pr[i]);
  }
  two_.resize(n_sites);
  for (std::size_t i = 0; i < n_sites; ++i) {
    const double up = pr[i];
    const double up_then_up = i + 1 < n_sites ? up * pr[i + 1] : 0.0;
    const double up_then_down = up - up_then_up;
    const double down_then_up = i > 0 ? (1.0 - up) * pr[i - 1] : 0.0;
    two_[i].uu = to_threshold(up_then_up);
    two_[i].ud = std::max(two_[i].uu, to_threshold(up_then_up + up_then_down));
    two_[i].du = std::max(two_[i].ud, to_threshold(up + down_then_up));
  }
  if (collapse_ratio <= 0.0) return;
  for (long long j = env.first_edge() + 1; j + 1 <= env.last_edge(); ++j) {
    const double mid = env.c_tilt(j);
    const double left = env.c_tilt(j - 1);
    const double right = env.c_tilt(j + 1);
    if (mid < collapse_ratio * std::max(left, right)) continue;
    TrapPair tp;
    tp.edge = j;
    tp.p_exit_left = left / (left + mid);
    tp.p_exit_right = right / (right + mid);
    tp.p_leave = tp.p_exit_left + tp.p_exit_right - tp.p_exit_left * tp.p_exit_right;
    tp.log_stay = std::log1p(-tp.p_leave);
    const int k = static_cast<int>(pairs_.size());
    pairs_.push_back(tp);
    pair_of_[static_cast<std::size_t>(j - offset_)] = k;
    pair_of_[static_cast<std::size_t>(j + 1 - offset_)] = k;
  }
}

ChainWalker::ChainWalker(const WalkKernel& kernel, long long x0, Stream& rng)
    : kernel_(&kernel), rng_(&rng), x_(x0 - kernel.offset()), seg_max_(x_), max_before_mark_(x_) {
  if (!kernel.env().has_site(x0)) throw std::out_of_range("ChainWalker: start outside window");
}

void ChainWalker::mark() {
  max_before_mark_ = std::max(max_before_mark_, seg_max_);
  seg_max_ = x_;
}

void ChainWalker::start_block(int pair_index) {
  const TrapPair& tp = kernel_->pair(pair_index);
  const long long left = tp.edge - kernel_->offset();
  const bool at_left = x_ == left;
  Block b;
  b.s0 = x_;
  b.s1 = at_left ? left + 1 : left;
  const double p_here = at_left ? tp.p_exit_left : tp.p_exit_right;
  std::uint64_t rounds = 0;
  if (tp.p_leave < 1.0) {
    const double r = std::floor(std::log(rng_->uniform_pos()) / tp.log_stay);
    rounds = r > 1e18 ? std::uint64_t{1000000000000000000ULL} : static_cast<std::uint64_t>(r);
  }
  if (rng_->uniform() * tp.p_leave < p_here) {
    b.length = 2 * rounds + 1;
    b.dest = at_left ? left - 1 : left + 2;
  } else {
    b.length = 2 * rounds + 2;
    b.dest = at_left ? left + 2 : left - 1;
  }
  b.done = 0;
  block_ = b;
  ++blocks_;
}

std::uint64_t ChainWalker::consume_block(std::uint64_t budget) {
  Block& b = *block_;
  const std::uint64_t take = std::min(budget, b.length - b.done);
  const std::uint64_t from = b.done;
  const std::uint64_t to = b.done + take;
  // positions after m jumps: s0 for even m < length, s1 for odd m < length, dest at length
  const std::uint64_t last_internal = std::min(to, b.length - 1);
  if (last_internal > from) {
    const bool odd = last_internal >= from + 2 || (from + 1) % 2 == 1;
    const bool even = last_internal >= from + 2 || (from + 1) % 2 == 0;
    if (odd) seg_max_ = std::max(seg_max_, b.s1);
    if (even) seg_max_ = std::max(seg_max_, b.s0);
  }
  b.done = to;
  if (b.done == b.length) {
    x_ = b.dest;
    seg_max_ = std::max(seg_max_, x_);
    block_.reset();
  } else {
    x_ = (b.done % 2 == 0) ? b.s0 : b.s1;
  }
  return take;
}

template <bool Collapse>
void ChainWalker::run(std::uint64_t steps) {
  const std::uint64_t* thr = kernel_->thresholds();
  const int* pair = Collapse ? kernel_->pair_table() : nullptr;
  Stream& rng = *rng_;
  long long x = x_;
  long long m = seg_max_;
  while (steps > 0) {
    if constexpr (Collapse) {
      if (block_) {
        x_ = x;
        seg_max_ = m;
        steps -= consume_block(steps);
        x = x_;
        m = seg_max_;
        continue;
      }
      if (pair[x] >= 0) {
        x_ = x;
        seg_max_ = m;
        start_block(pair[x]);
        continue;
      }
    }
    if constexpr (Collapse) {
      while (steps > 0 && pair[x] < 0) {
        x += (rng.bits63() < thr[x]) ? 1 : -1;
        m = std::max(m, x);
        --steps;
      }
    } else {
      const WalkKernel::TwoStep* two = kernel_->two_step();
      for (; steps >= 2; steps -= 2) {
        const auto r = static_cast<std::int64_t>(rng.bits63());
        const WalkKernel::TwoStep& t = two[x];
        // sign bit of r - threshold is the comparison, kept branch-free
        const long long c1 = -((r - static_cast<std::int64_t>(t.uu)) >> 63);
        const long long c2 = -((r - static_cast<std::int64_t>(t.ud)) >> 63);
        const long long c3 = -((r - static_cast<std::int64_t>(t.du)) >> 63);
        m = std::max(m, x + c1 + c2);
        x += 2 * (c1 + c3) - 2;
      }
      if (steps == 1) {
        x += (rng.bits63() < thr[x]) ? 1 : -1;
        m = std::max(m, x);
        steps = 0;
      }
    }
  }
  x_ = x;
  seg_max_ = m;
}

void ChainWalker::advance(std::uint64_t steps) {
  steps_ += steps;
  if (kernel_->collapses())
    run<true>(steps);
  else
    run<false>(steps);
}

long long ChainWalker::run_until_hit(long long a, long long b) {
  const long long ia = a - kernel_->offset();
  const long long ib = b - kernel_->offset();
  const std::uint64_t* thr = kernel_->thresholds();
  long long x = x_;
  long long m = seg_max_;
  while (x != ia && x != ib) {
    x += (rng_->bits63() < thr[x]) ? 1 : -1;
    m = std::max(m, x);
    ++steps_;
  }
  x_ = x;
  seg_max_ = m;
  return x + kernel_->offset();
}

long long WalkPath::value_at(double t) const {
  for (const auto& o : obs)
    if (o.time == t) return o.value;
  if (t < 0.0 || t > t_end) throw std::out_of_range("value_at: time outside the simulated horizon");
  for (const auto& c : collapse_log)
    if (t > c.t_start && t < c.t_end) throw std::runtime_error("value_at: time inside a collapsed block");
  const auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
  return positions[static_cast<std::size_t>(it - event_times.begin()) - 1];
}

std::string WalkPath::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "event_index,time,position\n";
  for (std::size_t k = 0; k < event_times.size(); ++k) out << k << ',' << event_times[k] << ',' << positions[k] << '\n';
  return out.str();
}

WalkPath simulate_walk(const Environment& env, long long x0, double t_end, const std::vector<double>& obs_times,
                       const WalkOptions& options, Stream& rng) {
  const WalkKernel kernel(env, options.collapse ? options.collapse_ratio : 0.0);
  return simulate_walk(kernel, x0, t_end, obs_times, options, rng);
}

WalkPath simulate_walk(const WalkKernel& kernel, long long x0, double t_end, const std::vector<double>& obs_times,
                       const WalkOptions& options, Stream& rng) {
  const Environment& env = kernel.env();
  if (!env.has_site(x0)) throw std::out_of_range("simulate_walk: start outside window");
  if (!(t_end > 0.0)) throw std::invalid_argument("simulate_walk: t_end must be positive");
  if (!std::is_sorted(obs_times.begin(), obs_times.end()) ||
      (!obs_times.empty() && (obs_times.front() < 0.0 || obs_times.back() > t_end)))
    throw std::invalid_argument("simulate_walk: observation times must be sorted within [0, t_end]");

  WalkPath path;
  path.start = x0;
  path.reflected = options.reflected;
  path.t_end = t_end;
  path.event_times.push_back(0.0);
  path.positions.push_back(x0);

  const long long off = kernel.offset();
  const bool collapse = options.collapse && kernel.collapses();
  std::vector<long long> visited{x0};
  auto visit = [&](long long s) {
    if (options.stop_after_distinct <= 0) return false;
    if (std::find(visited.begin(), visited.end(), s) == visited.end()) visited.push_back(s);
    return static_cast<int>(visited.size()) > options.stop_after_distinct;
  };
  auto is_new = [&](long long s) { return std::find(visited.begin(), visited.end(), s) == visited.end(); };

  Clock clock;
  long long x = x0;
  long long running_max = x0;
  std::size_t next_obs = 0;
  std::uint64_t events = 0;
  auto record_obs_until = [&](double t_limit, long long value) {
    // observation times strictly before t_limit see the current value
    while (next_obs < obs_times.size() && obs_times[next_obs] < t_limit) {
      path.obs.push_back({obs_times[next_obs], value, running_max});
      ++next_obs;
    }
  };

  while (true) {
    const double t = clock.sum;
    const int pk = collapse ? kernel.pair_of(static_cast<std::size_t>(x - off)) : -1;
    bool use_block = pk >= 0;
    if (use_block && options.stop_after_distinct > 0) {
      const TrapPair& tp = kernel.pair(pk);
      const long long other = x == tp.edge ? tp.edge + 1 : tp.edge;
      // a first crossing that ends the run happens at an unrecorded time
      if (is_new(other) && static_cast<int>(visited.size()) + 1 > options.stop_after_distinct) use_block = false;
    }
    if (use_block) {
      const TrapPair& tp = kernel.pair(pk);
      const bool at_left = x == tp.edge;
      const long long other = at_left ? x + 1 : x - 1;
      const double p_here = at_left ? tp.p_exit_left : tp.p_exit_right;
      std::uint64_t rounds = 0;
      if (tp.p_leave < 1.0) rounds = static_cast<std::uint64_t>(std::floor(std::log(rng.uniform_pos()) / tp.log_stay));
      std::uint64_t jumps;
      long long dest;
      if (rng.uniform() * tp.p_leave < p_here) {
        jumps = 2 * rounds + 1;
        dest = at_left ? tp.edge - 1 : tp.edge + 2;
      } else {
        jumps = 2 * rounds + 2;
        dest = at_left ? tp.edge + 2 : tp.edge - 1;
      }
      std::gamma_distribution<double> gamma(static_cast<double>(jumps), 1.0);
      const double T = gamma(rng);
      const double t_block_end = t + T;
      const int block_index = static_cast<int>(path.collapse_log.size());
      path.collapse_log.push_back({t, t_block_end, std::min(x, other), x, dest, jumps});
      // internal jump times are sorted uniforms on (t, t + T)
      std::uint64_t done = 0;
      double u_prev = 0.0;
      while (next_obs < obs_times.size() && obs_times[next_obs] < t_block_end) {
        const double u = (obs_times[next_obs] - t) / T;
        const std::uint64_t left = jumps - 1 - done;
        if (left > 0 && u > u_prev) {
          std::binomial_distribution<std::uint64_t> bin(left, std::min(1.0, (u - u_prev) / (1.0 - u_prev)));
          done += bin(rng);
        }
        u_prev = std::max(u_prev, u);
        const long long value = done % 2 == 0 ? x : other;
        const long long rmax = done >= 1 ? std::max(running_max, other) : running_max;
        path.obs.push_back({obs_times[next_obs], value, rmax, block_index, done});
        ++next_obs;
      }
      events += jumps;
      if (t_block_end > t_end) break;
      clock.add(T);
      if (jumps >= 2) {
        running_max = std::max(running_max, other);
        visit(other);
      }
      x = dest;
      running_max = std::max(running_max, x);
      path.event_times.push_back(clock.sum);
      path.positions.push_back(x);
      if (visit(x)) {
        path.stopped_early = true;
        path.stop_time = clock.sum;
        break;
      }
    } else {
      const double hold = rng.exponential();
      if (t + hold > t_end) {
        record_obs_until(std::numeric_limits<double>::infinity(), x);
        break;
      }
      record_obs_until(t + hold, x);
      clock.add(hold);
      x += (rng.bits63() < kernel.threshold(static_cast<std::size_t>(x - off))) ? 1 : -1;
      ++events;
      running_max = std::max(running_max, x);
      path.event_times.push_back(clock.sum);
      path.positions.push_back(x);
      const bool absorbed = !options.reflected && (x == env.min_site() || x == env.max_site());
      if (visit(x) || absorbed) {
        path.stopped_early = true;
        path.stop_time = clock.sum;
        break;
      }
    }
    if (events >= options.max_events) throw std::runtime_error("simulate_walk: event budget exhausted");
  }
  // observation times after an early stop are left unrecorded
  return path;
}

GapValue gap_at(const Environment& env, const ScaleSet& scales, long long running_max) {
  if (running_max >= env.max_site()) return {true, 0.0};
  return {false, env.r_tilt(running_max) / scales.d_n0};
}

namespace {

const ObsRecord& obs_at(const WalkPath& path, double t) {
  for (const auto& o : path.obs)
    if (o.time == t) return o;
  throw std::invalid_argument("walk_observables: time is not an observation time of the path");
}

// Sites visited during [t1, t2] in time order. visitor(site, time, exact) gets
// exact = false for crossings inside a collapse block, whose time is unknown.
template <class Visitor>
void visit_window(const WalkPath& path, double t1, double t2, long long value_at_t1, const ObsRecord* o1,
                  const ObsRecord* o2, Visitor&& visitor) {
  visitor(value_at_t1, t1, true);
  std::size_t b = 0;
  const auto& log = path.collapse_log;
  for (std::size_t k = 1; k < path.event_times.size(); ++k) {
    const double te = path.event_times[k];
    while (b < log.size() && log[b].t_end < te) ++b;
    const bool exit_event = b < log.size() && log[b].t_end == te;
    if (exit_event) {
      const CollapseRecord& c = log[b];
      if (c.t_end > t1 && c.t_start < t2) {
        const std::uint64_t from = (o1 && o1->block == static_cast<int>(b)) ? o1->block_jumps : 0;
        const std::uint64_t to = (o2 && o2->block == static_cast<int>(b)) ? o2->block_jumps : c.jumps;
        if (c.t_start >= t1 || (o1 && o1->block == static_cast<int>(b))) {
          const long long other = c.start == c.site_lo ? c.site_lo + 1 : c.site_lo;
          const std::uint64_t last_internal = std::min(to, c.jumps - 1);
          if (last_internal > from) {
            const double approx = std::max(t1, c.t_start);
            visitor(other, approx, false);
            if (last_internal >= from + 2 || (from + 1) % 2 == 0) visitor(c.start, approx, false);
          }
        }
      }
    }
    if (te > t1 && te <= t2) visitor(path.positions[k], te, true);
    if (te > t2) break;
  }
  // a block still running at t2 with its exit beyond the record
  for (std::size_t bb = 0; bb < log.size(); ++bb) {
    const CollapseRecord& c = log[bb];
    if (c.t_end <= path.t_end || !(c.t_start < t2)) continue;
    const std::uint64_t from = (o1 && o1->block == static_cast<int>(bb)) ? o1->block_jumps : 0;
    const std::uint64_t to = (o2 && o2->block == static_cast<int>(bb)) ? o2->block_jumps : c.jumps - 1;
    const long long other = c.start == c.site_lo ? c.site_lo + 1 : c.site_lo;
    if (to > from) visitor(other, std::max(t1, c.t_start), false);
  }
}

}  // namespace

WalkObservables walk_observables(const WalkPath& path, const Environment& env, const ScaleSet& scales,
                                 const ObservableSpec& spec) {
  WalkObservables out;
  long long prev = std::numeric_limits<long long>::min();
  for (double t : spec.sup_times) {
    const long long m = obs_at(path, t).running_max;
    if (m < prev) throw std::logic_error("walk_observables: running supremum decreased");
    prev = m;
    out.sup_at.emplace_back(t, m);
  }
  if (spec.window) {
    const auto [t1, t2] = *spec.window;
    const ObsRecord& o1 = obs_at(path, t1);
    const ObsRecord& o2 = obs_at(path, t2);
    long long w = o1.value;
    visit_window(path, t1, t2, o1.value, &o1, &o2, [&](long long s, double, bool) { w = std::max(w, s); });
    out.window_sup = w;
  }
  if (spec.gap_time) out.gap_n = gap_at(env, scales, obs_at(path, *spec.gap_time).running_max);
  if (spec.shift) {
    const double s = *spec.shift;
    const ObsRecord* os = nullptr;
    for (const auto& o : path.obs)
      if (o.time == s) os = &o;
    const long long start = os ? os->value : path.value_at(s);
    const double horizon = path.stopped_early ? path.stop_time : path.t_end;
    std::vector<long long> seen;
    double third = std::numeric_limits<double>::infinity();
    long long lo = start, hi = start;
    bool hidden = false;
    visit_window(path, s, horizon, start, os, nullptr, [&](long long site, double time, bool exact) {
      if (std::find(seen.begin(), seen.end(), site) == seen.end()) {
        seen.push_back(site);
        if (seen.size() == 3 && std::isinf(third)) {
          third = time;
          hidden = !exact;
        }
      }
    });
    if (hidden) throw std::runtime_error("walk_observables: escape happened inside a collapsed block");
    out.escape_T = std::isinf(third) ? third : third - s;
    if (std::isfinite(scales.d_ninf)) out.T_n = *out.escape_T / scales.d_ninf;
    if (spec.h && out.T_n) {
      const double t2 = s + *spec.h * scales.d_ninf;
      if (t2 > horizon && !path.stopped_early) throw std::invalid_argument("walk_observables: window beyond horizon");
      visit_window(path, s, t2, start, os, nullptr, [&](long long site, double time, bool) {
        if (time <= t2) {
          lo = std::min(lo, site);
          hi = std::max(hi, site);
        }
      });
      out.window_range_ok = hi - lo <= 1;
      if (*out.window_range_ok != (*out.T_n >= *spec.h))
        throw std::logic_error("walk_observables: window event and escape time disagree");
    }
  }
  return out;
}

double exact_mean_exit_two_site(double c_left, double c_mid, double c_right) {
  if (!(c_left > 0.0 && c_mid > 0.0 && c_right > 0.0))
    throw std::invalid_argument("exact_mean_exit_two_site: weights must be positive");
  const double q1 = c_mid / (c_mid + c_left);
  const double q2 = c_mid / (c_mid + c_right);
  return (1.0 + q1) / (1.0 - q1 * q2);
}

namespace {
double leave_probability(double c_left, double c_mid, double c_right) {
  const double p1 = c_left / (c_left + c_mid);
  const double p2 = c_right / (c_right + c_mid);
  return 1.0 - (1.0 - p1) * (1.0 - p2);
}
}  // namespace

double escape_laplace_geom(double c_left, double c_mid, double c_right, double xi) {
  if (xi < 0.0) throw std::invalid_argument("escape_laplace_geom: xi must be nonnegative");
  const double p = leave_probability(c_left, c_mid, c_right);
  return p / (1.0 - (1.0 - p) / ((1.0 + xi) * (1.0 + xi)));
}

double escape_geom_mean(double c_left, double c_mid, double c_right) {
  const double p = leave_probability(c_left, c_mid, c_right);
  return 2.0 * (1.0 - p) / p;
}

Ecdf escape_time_distribution(const Environment& env, long long edge_j, std::size_t replicas, Stream& rng,
                              bool collapse) {
  if (replicas == 0) throw std::invalid_argument("escape_time_distribution: need replicas >= 1");
  if (!env.has_edge(edge_j - 1) || !env.has_edge(edge_j + 1))
    throw std::invalid_argument("escape_time_distribution: pair must have both neighbours inside the window");
  const double cl = env.c_tilt(edge_j - 1), cm = env.c_tilt(edge_j), cr = env.c_tilt(edge_j + 1);
  const double norm = (cl + cr) / (2.0 * cm);
  const WalkKernel kernel(env, collapse ? 50.0 : 0.0);
  WalkOptions opt;
  opt.collapse = collapse;
  opt.stop_after_distinct = 2;
  std::vector<double> out(replicas);
  for (auto& v : out) {
    const WalkPath p = simulate_walk(kernel, edge_j, std::numeric_limits<double>::max(), {}, opt, rng);
    v = p.stop_time * norm;
  }
  return Ecdf(std::move(out));
}

}  // namespace rcm
