#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rcm {

/// Cadlag path on [0, 1] that is linear between breakpoints. Segment k covers
/// [t_k, t_{k+1}) (t_K = 1), starts at start_k and tends to end_k at its
/// right end.
class CadlagPath {
 public:
  CadlagPath() = default;
  CadlagPath(std::vector<double> times, std::vector<double> starts, std::vector<double> ends);
  /// Piecewise constant path.
  static CadlagPath step(std::vector<double> times, std::vector<double> values);

  std::size_t segments() const { return t_.size(); }
  double time(std::size_t k) const { return t_[k]; }
  /// Segment holding t.
  std::size_t segment_of(double t) const;
  /// Linear formula of segment k evaluated at t.
  double on_segment(std::size_t k, double t) const;
  double operator()(double t) const { return on_segment(segment_of(t), t); }
  /// (time, size) of jumps with |size| > delta.
  std::vector<std::pair<double, double>> jumps(double delta) const;

 private:
  std::vector<double> t_, a_, b_;
};

struct J1Bound {
  bool ok = false;
  double value = 0.0;       // sup |f o xi - g| + sup |xi - id|
  double space_term = 0.0;
  double time_term = 0.0;
  std::size_t matched = 0;
  std::size_t jumps_f = 0;
  std::size_t jumps_g = 0;
  std::string error;
};

/// Matches the jumps above delta in order with a piecewise linear time change
/// xi and evaluates the resulting bound on the J1 distance. Fails when the
/// jump counts differ.
J1Bound j1_upper_bound(const CadlagPath& f, const CadlagPath& g, double delta);

/// A threshold near target with no jump sizes within the factor ratio of it,
/// so small perturbations cannot change which jumps exceed it.
double separated_threshold(std::vector<double> jump_sizes, double target, double ratio = 1.5);

}  // namespace rcm
