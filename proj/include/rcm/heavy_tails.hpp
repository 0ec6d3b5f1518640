#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rcm/random.hpp"

namespace rcm {

/// Walls only (RW) or walls and traps (RWT).
enum class Mode { RW, RWT };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& text);

/// Parameters of the edge law and the bias.
///
/// Under RW the resistance is Pareto(alpha0) on [1, inf), so every
/// conductance lies in (0, 1]. Under RWT an edge is conductance-type with
/// probability p (c Pareto(alpha_inf)) and resistance-type otherwise
/// (r Pareto(alpha0)); p and 1-p stand in for the slowly varying factors.
struct ModelParams {
  double alpha0 = 0.5;
  std::optional<double> alpha_inf;
  double lambda = 0.0;
  double p = 0.5;
  Mode mode = Mode::RW;

  static ModelParams walls(double alpha0, double lambda = 0.0);
  static ModelParams walls_and_traps(double alpha0, double alpha_inf, double p, double lambda = 0.0);

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;

  /// p when mode is RWT, 0 otherwise (no conductance-type edges under RW).
  double trap_weight() const { return mode == Mode::RWT ? p : 0.0; }
  double alpha_traps() const;
};

/// Scaling sequences for window scale n. Values that overflow a double are
/// +inf; the log_* members stay finite.
struct ScaleSet {
  long long n = 1;
  double d_n0 = 1;
  double d_ninf = 0;  // RWT only, NaN under RW
  double a_n = 1;
  double b_n = 0;     // RWT only, NaN under RW
  double d_star_ninf = 0;
  double d_star_n0 = 1;
  double log_d_n0 = 0;
  double log_d_ninf = 0;
  double log_a_n = 0;
  double log_b_n = 0;
};

struct EdgeDraw {
  double c;
  double r;
};

/// t with t^{-alpha} = u.
double pareto_quantile(double u, double alpha);

EdgeDraw sample_edge_law(const ModelParams& params, Stream& rng);

/// P(r > t) and P(c > t) for the default laws.
double resistance_survival(const ModelParams& params, double t);
double conductance_survival(const ModelParams& params, double t);

/// E[c] of the default law; +inf when the conductance tail has alpha_inf <= 1.
double mean_conductance(const ModelParams& params);

ScaleSet scaling_terms(const ModelParams& params, long long n);

/// Plug-in seam for non-default edge laws. Scales come from numerically
/// inverting the empirical survival of a large sample.
struct CustomEdgeLaw {
  std::function<EdgeDraw(Stream&)> sample;
};

/// inf{t > 0 : P_hat(X > t) <= 1/n} for X = r (resistances) or X = c.
double empirical_scale(const CustomEdgeLaw& law, long long n, bool resistances,
                       std::size_t draws, Stream& rng);

/// P(S(1) <= x) for the one-sided alpha-stable law with Laplace exponent
/// Gamma(1-alpha) lambda^alpha (Levy measure alpha x^{-1-alpha} dx).
double stable_marginal_cdf(double alpha, double x);
/// P(S(1) > x), accurate in relative terms far into the right tail.
double stable_marginal_survival(double alpha, double x);

/// Which exponential tilt a subordinator carries when evaluated.
enum class Tilt {
  Decreasing,  // e^{-2 lambda u}, the resistance process
  Increasing,  // e^{+2 lambda u}, the conductance process
};

struct Jump {
  double u;  // location
  double w;  // untilted jump size
};

/// Two-sided pure-jump subordinator on [-K, K], stored as its jumps above
/// epsilon plus the compensating drift for the discarded small jumps.
///
/// S(0) = 0, S(t) = sum of tilted jumps in (0, t] plus drift for t >= 0 and
/// minus the same over (t, 0] for t < 0, so the path is cadlag.
class SubordinatorPath {
 public:
  SubordinatorPath() = default;
  SubordinatorPath(double alpha, double half_width, double epsilon, std::vector<Jump> atoms,
                   Tilt tilt = Tilt::Decreasing, double lambda = 0.0);

  double alpha() const { return alpha_; }
  double half_width() const { return half_width_; }
  double epsilon() const { return epsilon_; }
  double compensation_rate() const { return compensation_rate_; }
  Tilt tilt() const { return tilt_; }
  double lambda() const { return lambda_; }
  const std::vector<Jump>& atoms() const { return atoms_; }

  /// Same jumps, different bias.
  SubordinatorPath with_lambda(double lambda) const;

  /// Tilt factor e^{+-2 lambda u}.
  double tilt_factor(double u) const;
  double tilted_jump(std::size_t index) const;

  /// Tilted evaluation S(t) and left limit S(t-).
  double operator()(double t) const;
  double left_limit(double t) const;

  /// Untilted increment S(b) - S(a), a <= b.
  double untilted_increment(double a, double b) const;

  /// Untilted increments over the cells [k/n, (k+1)/n] for k in [k_begin, k_end).
  std::vector<double> cell_increments(long long n, long long k_begin, long long k_end) const;

  /// Index of the jump whose half-open image interval [S(u-), S(u)) holds y.
  std::optional<std::size_t> jump_containing(double y) const;

  /// Indices of atoms located in (a, b].
  std::pair<std::size_t, std::size_t> atoms_in(double a, double b) const;

 private:
  double drift(double t) const;
  double prefix_through(double t, bool inclusive) const;

  double alpha_ = 0.5;
  double half_width_ = 1.0;
  double epsilon_ = 1.0;
  double compensation_rate_ = 0.0;
  Tilt tilt_ = Tilt::Decreasing;
  double lambda_ = 0.0;
  std::vector<Jump> atoms_;
  std::vector<double> prefix_;  // prefix_[k] = sum of tilted jumps of atoms_[0..k)
  double prefix_at_zero_ = 0.0;
};

/// alpha epsilon^{1-alpha} / (1-alpha): mean small-jump mass per unit length.
double compensation_rate(double alpha, double epsilon);

SubordinatorPath sample_subordinator(double alpha, double half_width, double epsilon, Stream& rng,
                                     Tilt tilt = Tilt::Decreasing, double lambda = 0.0);

}  // namespace rcm
