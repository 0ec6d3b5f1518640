#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcm/heavy_tails.hpp"
#include "rcm/random.hpp"
#include "rcm/stats.hpp"
#include "rcm/walk_sim.hpp"

namespace rcm {

struct SpeedAtom {
  double x;  // resistance coordinate
  double m;  // mass
  double v;  // spatial preimage
};

/// Purely atomic speed measure on an increasing set of positions; the
/// quasi-diffusion reflects at the first and last atom.
class AtomicSpeedMeasure {
 public:
  AtomicSpeedMeasure() = default;
  AtomicSpeedMeasure(std::vector<SpeedAtom> atoms, double x_lo, double x_hi);

  const std::vector<SpeedAtom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }
  double total_mass() const;
  /// Green value of atom i: 2 d- d+ / (d- + d+), or 2 d at an extreme atom.
  double green(std::size_t i) const;
  /// Probability that the next move from atom i is to i - 1.
  double p_left(std::size_t i) const;
  /// Atom at x, or the neighbour reached first by Brownian motion started at x.
  std::size_t start_atom(double x, Stream& rng) const;
  std::string to_json() const;

 private:
  std::vector<SpeedAtom> atoms_;
  double x_lo_ = 0.0;
  double x_hi_ = 0.0;
};

struct WallsMeasureOptions {
  /// Jumps above this size become grid breakpoints so that an atom sits
  /// right before each of them; grid points within half a step of such a
  /// jump are dropped.
  double resolve_jumps_above = 0.02;
  /// Multiplies the density mean_c e^{2 lambda v}.
  double density_factor = 1.0;
};

/// Cells [a, b) of a grid on [-K, K] adjusted to large jumps; each carries mass
/// density_factor * mean_c * int_a^b e^{2 lambda v} dv at position S(b-).
AtomicSpeedMeasure build_speed_measure_walls(const SubordinatorPath& sub0, double lambda, double K, double grid_step,
                                             double mean_c, const WallsMeasureOptions& options = {});

/// One atom per jump (y, w) of the conductance process with w above the
/// cutoff: position S0(y), mass e^{2 lambda y} w, preimage y.
AtomicSpeedMeasure build_speed_measure_traps(const SubordinatorPath& sub0, const SubordinatorPath& subinf,
                                             double lambda, double K, double weight_cutoff);

struct LimitObs {
  double time;
  std::size_t atom;
  std::size_t running_max;   // atom index
  std::size_t segment_max;   // max atom index since the previous observation (inclusive)
  double max_time = 0.0;     // time spent at the running-max atom so far
};

struct LimitPath {
  std::size_t start = 0;
  double t_end = 0.0;
  std::vector<double> event_times;  // empty unless events were recorded
  std::vector<std::size_t> atoms;
  std::vector<LimitObs> obs;
  std::uint64_t events = 0;
  /// Time the path first reached the first or last atom (inf if never).
  double boundary_time = 0.0;

  std::string to_csv(const AtomicSpeedMeasure& measure) const;
};

struct QuasiDiffusionOptions {
  bool record_events = false;
  /// End the path after this many moves (0: run to t_end).
  std::uint64_t stop_after_events = 0;
  std::uint64_t max_events = 4'000'000'000ULL;
};

LimitPath simulate_quasi_diffusion(const AtomicSpeedMeasure& measure, std::size_t start_atom, double t_end,
                                   const std::vector<double>& obs_times, Stream& rng,
                                   const QuasiDiffusionOptions& options = {});

struct LimitObservables {
  double z_bar = 0.0;        // spatial running max at t
  double y_bar = 0.0;        // resistance-coordinate running max at t
  bool max_equals_window = false;  // running max at t equals max over [t, t h]
  bool same_atom = false;          // atom at t equals atom at t h
  bool at_max = false;             // Z_t equals its running max
  double trap_mass = 0.0;          // mass of the atom occupied at t
};

/// t and t h must be observation times of the path.
LimitObservables limit_observables(const LimitPath& path, const AtomicSpeedMeasure& measure,
                                   const SubordinatorPath& sub0, double t, double h);

/// Gap(t): the subordinator jump whose image interval holds the maximum M of
/// the Brownian path behind the quasi-diffusion. With local time l at the
/// running-max atom and distance d to the next atom,
/// P(M - y_bar <= z) = exp(-(l / 2) (1 / z - 1 / d)). A maximum that lands in
/// the compensated drift gets a size-biased jump below epsilon. Sentinel when
/// the running max is the last atom.
GapValue limit_gap(const LimitPath& path, const AtomicSpeedMeasure& measure, const SubordinatorPath& sub0, double t,
                   Stream& rng);

struct ThetaBarOptions {
  double K = 2.0;
  double epsilon0 = 1e-3;
  double weight_cutoff = 1e-3;
};

/// Monte Carlo estimate of E exp(-h (A0 + A2) / (2 A1)).
EstimateResult theta_bar_limit(const ModelParams& params, double h, std::size_t replicas, Stream& rng,
                               const ThetaBarOptions& options = {});
/// One sample of the triple (A0, A1, A2).
struct TrapTriple {
  double a0, a1, a2;
};
TrapTriple sample_trap_triple(const ModelParams& params, Stream& rng, const ThetaBarOptions& options = {});

}  // namespace rcm
