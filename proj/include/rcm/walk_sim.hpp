#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rcm/environment.hpp"
#include "rcm/random.hpp"
#include "rcm/stats.hpp"

namespace rcm {

/// Two-site trap pair on edge j (sites j, j+1) that the walkers cross in one draw.
struct TrapPair {
  long long edge;
  double p_exit_left;   // from site j, step to j-1
  double p_exit_right;  // from site j+1, step to j+2
  double log_stay;      // log of the round-trip probability (1-p1)(1-p2)
  double p_leave;       // 1 - (1-p1)(1-p2)
};

/// Per-environment tables shared by every walker on it.
class WalkKernel {
 public:
  /// collapse_ratio <= 0 disables trap collapse.
  explicit WalkKernel(const Environment& env, double collapse_ratio = 50.0);

  const Environment& env() const { return *env_; }
  long long offset() const { return offset_; }
  std::size_t sites() const { return thr_.size(); }
  /// Right-step probability scaled to 2^63.
  std::uint64_t threshold(std::size_t idx) const { return thr_[idx]; }
  const std::uint64_t* thresholds() const { return thr_.data(); }
  /// Cumulative thresholds of the two-jump moves up-up, up-down, down-up from each site.
  struct TwoStep {
    std::uint64_t uu, ud, du;
  };
  const TwoStep* two_step() const { return two_.data(); }
  const int* pair_table() const { return pair_of_.data(); }
  /// Pair index of site idx, or -1.
  int pair_of(std::size_t idx) const { return pair_of_[idx]; }
  const TrapPair& pair(int k) const { return pairs_[static_cast<std::size_t>(k)]; }
  const std::vector<TrapPair>& pairs() const { return pairs_; }
  bool collapses() const { return !pairs_.empty(); }

 private:
  const Environment* env_;
  long long offset_;
  std::vector<std::uint64_t> thr_;
  std::vector<TwoStep> two_;
  std::vector<int> pair_of_;
  std::vector<TrapPair> pairs_;
};

/// Embedded jump chain with exact collapse of trap-pair oscillations. Time
/// enters only through Poisson step counts: X_t = Y_{N_t} with N a rate-one
/// Poisson process independent of Y.
class ChainWalker {
 public:
  ChainWalker(const WalkKernel& kernel, long long x0, Stream& rng);

  /// Perform this many further jumps.
  void advance(std::uint64_t steps);
  /// Jump until the walker sits at a or b; returns the site hit.
  long long run_until_hit(long long a, long long b);

  long long position() const { return x_ + kernel_->offset(); }
  long long running_max() const { return std::max(max_before_mark_, seg_max_) + kernel_->offset(); }
  /// Max since the last mark(), including the position at the mark.
  long long segment_max() const { return seg_max_ + kernel_->offset(); }
  void mark();
  std::uint64_t steps() const { return steps_; }
  std::uint64_t collapsed_blocks() const { return blocks_; }

 private:
  struct Block {
    long long s0 = 0, s1 = 0, dest = 0;
    std::uint64_t length = 0, done = 0;
  };
  template <bool Collapse>
  void run(std::uint64_t steps);
  void start_block(int pair_index);
  std::uint64_t consume_block(std::uint64_t budget);

  const WalkKernel* kernel_;
  Stream* rng_;
  long long x_;
  long long seg_max_;
  long long max_before_mark_;
  std::uint64_t steps_ = 0;
  std::uint64_t blocks_ = 0;
  std::optional<Block> block_;
};

struct CollapseRecord {
  double t_start;
  double t_end;
  long long site_lo;   // the pair is {site_lo, site_lo + 1}
  long long start;
  long long exit_site;
  std::uint64_t jumps; // jumps inside the block including the exit jump
};

struct ObsRecord {
  double time;
  long long value;
  long long running_max;
  int block = -1;                // collapse record in progress at this time
  std::uint64_t block_jumps = 0; // jumps of that block already made
};

struct WalkOptions {
  bool reflected = true;
  bool collapse = true;
  double collapse_ratio = 50.0;
  /// Stop as soon as the walk has visited more than this many distinct sites (0: never).
  int stop_after_distinct = 0;
  std::uint64_t max_events = 2'000'000'000ULL;
};

/// Event record of one continuous-time walk; positions[k] holds on
/// [event_times[k], event_times[k+1]).
struct WalkPath {
  long long start = 0;
  bool reflected = true;
  double t_end = 0.0;
  bool stopped_early = false;
  double stop_time = 0.0;
  std::vector<double> event_times;
  std::vector<long long> positions;
  std::vector<CollapseRecord> collapse_log;
  std::vector<ObsRecord> obs;

  long long value_at_obs(std::size_t k) const { return obs[k].value; }
  /// Value at t; throws inside a collapse interval unless t is an observation time.
  long long value_at(double t) const;
  std::string to_csv() const;
};

WalkPath simulate_walk(const Environment& env, long long x0, double t_end, const std::vector<double>& obs_times,
                       const WalkOptions& options, Stream& rng);
/// Same, reusing prepared kernel tables.
WalkPath simulate_walk(const WalkKernel& kernel, long long x0, double t_end, const std::vector<double>& obs_times,
                       const WalkOptions& options, Stream& rng);

/// Gap value or the boundary sentinel.
struct GapValue {
  bool sentinel = false;
  double value = 0.0;
};

struct ObservableSpec {
  std::vector<double> sup_times;   // each must be an observation time
  std::optional<std::pair<double, double>> window;  // endpoints must be observation times
  std::optional<double> gap_time;  // observation time, value reported over d_n0
  std::optional<double> shift;     // escape time is measured from here
  std::optional<double> h;         // sub-aging window length in units of d_ninf
};

struct WalkObservables {
  std::vector<std::pair<double, long long>> sup_at;
  std::optional<long long> window_sup;
  std::optional<GapValue> gap_n;
  std::optional<double> escape_T;    // raw time after the shift, +inf if never within the horizon
  std::optional<double> T_n;         // escape_T / d_ninf
  std::optional<bool> window_range_ok;
};

WalkObservables walk_observables(const WalkPath& path, const Environment& env, const ScaleSet& scales,
                                 const ObservableSpec& spec);

/// Gap at running max m: r^{lambda/n}(m, m+1) / d_n0, or the sentinel at the right wall.
GapValue gap_at(const Environment& env, const ScaleSet& scales, long long running_max);

/// Mean time from the left site of the middle edge until the first step out of the pair.
double exact_mean_exit_two_site(double c_left, double c_mid, double c_right);
/// Laplace transform of a Geometric(p) number of Exp(1) pairs.
double escape_laplace_geom(double c_left, double c_mid, double c_right, double xi);
/// 2(1-p)/p, the mean implied by the geometric sum.
double escape_geom_mean(double c_left, double c_mid, double c_right);

/// Escape times from the pair {j, j+1} started at j, normalized by
/// (c_left + c_right) / (2 c_mid).
Ecdf escape_time_distribution(const Environment& env, long long edge_j, std::size_t replicas, Stream& rng,
                              bool collapse = true);

}  // namespace rcm
