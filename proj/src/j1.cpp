#include "rcm/j1.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcm {

CadlagPath::CadlagPath(std::vector<double> times, std::vector<double> starts, std::vector<double> ends)
    : t_(std::move(times)), a_(std::move(starts)), b_(std::move(ends)) {
  if (t_.empty() || t_.size() != a_.size() || t_.size() != b_.size())
    throw std::invalid_argument("CadlagPath: need matching nonempty arrays");
  if (t_.front() != 0.0) throw std::invalid_argument("CadlagPath: first breakpoint must be 0");
  for (std::size_t k = 1; k < t_.size(); ++k)
    if (!(t_[k] > t_[k - 1])) throw std::invalid_argument("CadlagPath: breakpoints must increase");
  if (!(t_.back() < 1.0)) throw std::invalid_argument("CadlagPath: breakpoints must lie in [0, 1)");
}

CadlagPath CadlagPath::step(std::vector<double> times, std::vector<double> values) {
  std::vector<double> ends = values;
  return CadlagPath(std::move(times), std::move(values), std::move(ends));
}

std::size_t CadlagPath::segment_of(double t) const {
  const auto it = std::upper_bound(t_.begin(), t_.end(), t);
  return it == t_.begin() ? 0 : static_cast<std::size_t>(it - t_.begin()) - 1;
}

double CadlagPath::on_segment(std::size_t k, double t) const {
  const double t0 = t_[k];
  const double t1 = k + 1 < t_.size() ? t_[k + 1] : 1.0;
  if (a_[k] == b_[k]) return a_[k];
  return a_[k] + (b_[k] - a_[k]) * (t - t0) / (t1 - t0);
}

std::vector<std::pair<double, double>> CadlagPath::jumps(double delta) const {
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 1; k < t_.size(); ++k) {
    const double size = a_[k] - b_[k - 1];
    if (std::abs(size) > delta) out.emplace_back(t_[k], size);
  }
  return out;
}

J1Bound j1_upper_bound(const CadlagPath& f, const CadlagPath& g, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("j1_upper_bound: delta must be positive");
  J1Bound out;
  const auto jf = f.jumps(delta);
  const auto jg = g.jumps(delta);
  out.jumps_f = jf.size();
  out.jumps_g = jg.size();
  if (jf.size() != jg.size()) {
    out.error = "jump counts above delta differ: " + std::to_string(jf.size()) + " vs " + std::to_string(jg.size());
    return out;
  }
  // xi maps g-time to f-time, sending the i-th large jump of g to that of f
  std::vector<double> s{0.0}, tau{0.0};
  for (std::size_t i = 0; i < jg.size(); ++i) {
    s.push_back(jg[i].first);
    tau.push_back(jf[i].first);
  }
  s.push_back(1.0);
  tau.push_back(1.0);
  for (std::size_t i = 0; i < s.size(); ++i) out.time_term = std::max(out.time_term, std::abs(s[i] - tau[i]));

  auto knot_of = [&](double x) {
    const auto it = std::upper_bound(s.begin(), s.end(), x);
    return std::min(static_cast<std::size_t>(it - s.begin()), s.size() - 1) - 1;
  };
  auto xi = [&](std::size_t k, double x) { return tau[k] + (tau[k + 1] - tau[k]) * (x - s[k]) / (s[k + 1] - s[k]); };
  auto xi_inv = [&](double y) {
    const auto it = std::upper_bound(tau.begin(), tau.end(), y);
    const std::size_t k = std::min(static_cast<std::size_t>(it - tau.begin()), tau.size() - 1) - 1;
    return s[k] + (s[k + 1] - s[k]) * (y - tau[k]) / (tau[k + 1] - tau[k]);
  };

  std::vector<double> cuts(s.begin(), s.end());
  for (std::size_t k = 0; k < g.segments(); ++k) cuts.push_back(g.time(k));
  for (std::size_t k = 0; k < f.segments(); ++k) cuts.push_back(xi_inv(f.time(k)));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double sup = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i], b = cuts[i + 1];
    const double mid = 0.5 * (a + b);
    const std::size_t kx = knot_of(mid);
    const std::size_t kg = g.segment_of(mid);
    const std::size_t kf = f.segment_of(xi(kx, mid));
    for (double x : {a, b}) sup = std::max(sup, std::abs(f.on_segment(kf, xi(kx, x)) - g.on_segment(kg, x)));
  }
  out.space_term = sup;
  out.value = sup + out.time_term;
  out.matched = jf.size();
  out.ok = true;
  return out;
}

double separated_threshold(std::vector<double> sizes, double target, double ratio) {
  if (!(target > 0.0) || !(ratio > 1.0)) throw std::invalid_argument("separated_threshold: bad arguments");
  for (double& x : sizes) x = std::abs(x);
  auto clear = [&](double d) {
    return std::none_of(sizes.begin(), sizes.end(), [&](double x) { return x > d / ratio && x < d * ratio; });
  };
  // walk outward from the target on a fine log grid
  for (int k = 0; k < 400; ++k) {
    for (int sign : {1, -1}) {
      const double d = target * std::pow(ratio, 0.05 * sign * k);
      if (clear(d)) return d;
    }
  }
  throw std::runtime_error("separated_threshold: no clear threshold near target");
}

}  // namespace rcm
