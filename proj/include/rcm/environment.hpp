#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rcm/heavy_tails.hpp"
#include "rcm/random.hpp"

namespace rcm {

/// Edge conductances c_i of the edges {i, i+1}, i = -Kn..Kn-1, on the sites
/// -Kn..Kn. The bias enters only through the tilted accessors.
class Environment {
 public:
  Environment() = default;
  Environment(ModelParams params, long long n, long long K, std::vector<double> conductances,
              std::optional<std::uint64_t> seed = std::nullopt);

  const ModelParams& params() const { return params_; }
  long long n() const { return n_; }
  long long K() const { return K_; }
  long long half_sites() const { return K_ * n_; }
  long long min_site() const { return -K_ * n_; }
  long long max_site() const { return K_ * n_; }
  long long first_edge() const { return -K_ * n_; }
  long long last_edge() const { return K_ * n_ - 1; }
  std::size_t edge_count() const { return c_.size(); }
  std::optional<std::uint64_t> seed() const { return seed_; }
  double lambda() const { return params_.lambda; }

  bool has_edge(long long i) const { return i >= first_edge() && i <= last_edge(); }
  bool has_site(long long x) const { return x >= min_site() && x <= max_site(); }

  double c(long long i) const { return c_[index(i)]; }
  double r(long long i) const { return 1.0 / c_[index(i)]; }
  /// c_i e^{2 lambda i / n}
  double c_tilt(long long i) const { return c_tilted_[index(i)]; }
  double r_tilt(long long i) const { return 1.0 / c_tilted_[index(i)]; }
  /// Sum of the tilted conductances of the edges at site x inside the window.
  double site_weight(long long x) const;
  /// P(next step is to x + 1) for the embedded chain, reflecting at the window ends.
  double p_right(long long x) const;

  const std::vector<double>& conductances() const { return c_; }

  /// Sum of tilted resistances over edges [first_edge(), i).
  double resistance_prefix(long long site) const { return r_prefix_[static_cast<std::size_t>(site - min_site())]; }

  /// Copy with one edge replaced.
  Environment with_edge(long long i, double conductance) const;

 private:
  std::size_t index(long long i) const { return static_cast<std::size_t>(i - first_edge()); }
  void rebuild();

  ModelParams params_;
  long long n_ = 1;
  long long K_ = 1;
  std::vector<double> c_;
  std::vector<double> c_tilted_;
  std::vector<double> r_prefix_;
  std::optional<std::uint64_t> seed_;
};

/// 2Kn i.i.d. edges from the model law, drawn from the given stream.
Environment generate_environment(const ModelParams& params, long long n, long long K, Stream& rng);
/// Reproducible from (seed, n, K, params) alone.
Environment generate_environment(const ModelParams& params, long long n, long long K, std::uint64_t seed);

/// Series resistance between sites i and j with the bias included.
double effective_resistance(const Environment& env, long long i, long long j);

/// P_x(hit b before a) = R(a, x) / R(a, b).
double hitting_probability_exact(const Environment& env, long long x, long long a, long long b);

struct PointAtom {
  double location;
  double weight;
};

/// Atoms sorted by strictly increasing location, weights positive.
class PointMeasure {
 public:
  PointMeasure() = default;
  explicit PointMeasure(std::vector<PointAtom> atoms);

  const std::vector<PointAtom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  double total_mass() const;
  /// Atoms in [x1, x2] with weight >= w.
  std::vector<PointAtom> in_rectangle(double x1, double x2, double w) const;
  std::size_t count(double x1, double x2, double w) const { return in_rectangle(x1, x2, w).size(); }

 private:
  std::vector<PointAtom> atoms_;
};

/// Rescaled partial-sum process on the lattice 1/n: P[k] is its value at k/n.
/// t >= 0 reads P[floor(n t)], t < 0 reads P[ceil(n t)].
class LatticeStepFunction {
 public:
  LatticeStepFunction() = default;
  LatticeStepFunction(long long n, long long k_min, std::vector<double> values);

  double operator()(double t) const;
  double at_index(long long k) const { return values_[static_cast<std::size_t>(k - k_min_)]; }
  long long n() const { return n_; }
  long long k_min() const { return k_min_; }
  long long k_max() const { return k_min_ + static_cast<long long>(values_.size()) - 1; }

 private:
  long long n_ = 1;
  long long k_min_ = 0;
  std::vector<double> values_;
};

struct RescaledProcesses {
  LatticeStepFunction s0;                  // resistance process over d_n0
  std::optional<LatticeStepFunction> sinf; // conductance process over d_ninf (RWT)
  PointMeasure nu0;                        // r_i / d_n0 at i / n
  std::optional<PointMeasure> nuinf;       // c_i / d_ninf at i / n (RWT)
};

RescaledProcesses rescaled_processes(const Environment& env, const ScaleSet& scales);

struct WallTrapSets {
  std::vector<long long> walls;
  std::vector<long long> traps;
  bool separated = true;
};

/// Walls r_j > d_n0^{1-dh}, traps c_j > d_ninf^{1-dh}, and whether all of
/// them are more than n^{1/4} apart.
WallTrapSets wall_trap_sets(const Environment& env, const ScaleSet& scales, double delta_hat);

/// One JSON Lines record {seed, n, K, mode, params, edges}.
std::string environment_to_jsonl(const Environment& env);
Environment environment_from_jsonl(const std::string& line);

}  // namespace rcm
