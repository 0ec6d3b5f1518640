#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <cmath>

// pchip.hpp in Boost 1.74 calls isnan unqualified
namespace boost::math::interpolators {
using std::isnan;
}
#include <boost/math/interpolators/pchip.hpp>

#include "rcm/environment.hpp"
#include "rcm/heavy_tails.hpp"

namespace rcm {

/// log P(S(1) > s) on log-spaced knots with monotone cubic interpolation,
/// and the map G^{-1}(s) = P(S(1) > s)^{-1/alpha}, which sends the stable
/// marginal to the Pareto(alpha) law on [1, inf).
class QuantileTable {
 public:
  explicit QuantileTable(double alpha, std::size_t knots = 2048);

  double alpha() const { return alpha_; }
  std::size_t knots() const { return log_s_.size(); }
  double s_min() const { return std::exp(log_s_.front()); }
  double s_max() const { return std::exp(log_s_.back()); }

  double log_survival(double s) const;
  double survival(double s) const { return std::exp(log_survival(s)); }
  /// G^{-1}(s); nondecreasing, equal to 1 for s <= 0.
  double inverse(double s) const;
  /// FNV-1a digest of the knot values.
  std::uint64_t hash() const;

 private:
  double alpha_;
  std::vector<double> log_s_;
  std::vector<double> log_surv_;
  std::optional<boost::math::interpolators::pchip<std::vector<double>>> spline_;
};

/// Shared, lazily built table per (alpha, knots).
std::shared_ptr<const QuantileTable> shared_quantile_table(double alpha, std::size_t knots = 2048);

/// g_n(y) = G^{-1}(n^{1/alpha} y) / d_star.
double g_function(double alpha, long long n, double y, const QuantileTable& table, double d_star);

/// Two independent subordinators and a Bernoulli(p) thinning sequence on
/// the lattice window of the largest scale.
struct CouplingBundle {
  ModelParams params;
  long long K = 1;
  long long n_max = 1;
  std::uint64_t seed = 0;
  double eta = 1e-2;
  std::vector<std::uint8_t> bern;  // b_x for x = -K n_max .. K n_max - 1
  SubordinatorPath sub0;
  std::optional<SubordinatorPath> subinf;
  std::shared_ptr<const QuantileTable> table0;
  std::shared_ptr<const QuantileTable> tableinf;
  std::vector<long long> ones_prefix;  // ones among b over [-K n_max, -K n_max + j)

  bool b(long long x) const { return bern[static_cast<std::size_t>(x + K * n_max)] != 0; }
  /// x -> x*, the signed count of conductance-type edges between 0 and x.
  long long star(long long x) const;
};

struct BundleOptions {
  double eta = 1e-2;  // truncation at eta n_max^{-1/alpha}
  std::size_t knots = 2048;
};

CouplingBundle build_bundle(const ModelParams& params, long long K, long long n_max, std::uint64_t seed,
                            const BundleOptions& options = {});
/// Bundle from explicit ingredients (degenerate thinning, hand-made paths).
CouplingBundle make_bundle(const ModelParams& params, long long K, long long n_max, std::vector<std::uint8_t> bern,
                           SubordinatorPath sub0, std::optional<SubordinatorPath> subinf, std::size_t knots = 2048);

/// Which edge carries each limit atom in the window: edge index, or none
/// when the atom lies outside the cells the scale n uses.
struct Correspondence {
  std::vector<std::optional<long long>> edge_of_atom0;
  std::vector<std::optional<long long>> edge_of_atominf;
};

struct CoupledEnvironment {
  Environment env;
  Correspondence correspondence;
};

CoupledEnvironment build_coupled_environment(const CouplingBundle& bundle, const ModelParams& params, long long n,
                                             long long K);

/// Limit atoms the discrete measures converge to under the coupling:
/// (u, w) for the resistance process under RW, (u / q, q^{-1/alpha} w)
/// under RWT with q the thinning weight of that family.
PointMeasure coupled_limit_measure(const CouplingBundle& bundle, bool traps);

struct MatchWindow {
  double x1 = -1.0;
  double x2 = 1.0;
  double w_min = 0.5;
};

struct MatchTolerance {
  double location = 0.0;       // absolute
  double weight_relative = 0.05;
};

enum class MatchFailure { Absent, Ambiguous };

struct AtomMatch {
  std::size_t limit_index;
  std::size_t discrete_index;
  double location_error;
  double weight_error;
  double displacement() const { return location_error + weight_error; }
};

struct MatchReport {
  std::vector<AtomMatch> matches;
  std::vector<std::pair<std::size_t, MatchFailure>> failures;
  std::size_t limit_count = 0;
  std::size_t discrete_count = 0;
  bool ok() const { return failures.empty() && limit_count == discrete_count; }
  double max_displacement() const;
};

MatchReport match_atoms(const PointMeasure& discrete, const PointMeasure& limit, const MatchWindow& window,
                        const MatchTolerance& tol);

std::string bundle_to_json(const CouplingBundle& bundle);
CouplingBundle bundle_from_json(const std::string& text);

}  // namespace rcm
