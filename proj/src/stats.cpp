#include "rcm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcm {

Ecdf::Ecdf(std::vector<double> sample) : sorted_(std::move(sample)) {
  if (sorted_.empty()) throw std::invalid_argument("Ecdf: empty sample");
  std::sort(sorted_.begin(), sorted_.end());
}

double Ecdf::operator()(double x) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

double Ecdf::mean() const {
  double s = 0.0;
  for (double v : sorted_) s += v;
  return s / static_cast<double>(sorted_.size());
}

double ks_distance(const Ecdf& a, const Ecdf& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_distance: empty sample");
  const auto& x = a.sorted();
  const auto& y = b.sorted();
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double kolmogorov_survival(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    sum += sign * term;
    if (term < 1e-16) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_pvalue_one_sample(double distance, std::size_t n) {
  const double en = std::sqrt(static_cast<double>(n));
  return kolmogorov_survival((en + 0.12 + 0.11 / en) * distance);
}

double ks_pvalue(double distance, std::size_t n_a, std::size_t n_b) {
  const double na = static_cast<double>(n_a);
  const double nb = static_cast<double>(n_b);
  const double en = std::sqrt(na * nb / (na + nb));
  return kolmogorov_survival((en + 0.12 + 0.11 / en) * distance);
}

Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z) {
  if (trials == 0) throw std::invalid_argument("wilson_interval: trials must be >= 1");
  if (successes > trials) throw std::invalid_argument("wilson_interval: successes exceed trials");
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (phat + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

EstimateResult proportion_estimate(std::uint64_t successes, std::uint64_t trials) {
  const Interval ci = wilson_interval(successes, trials);
  EstimateResult r;
  r.replicas = trials;
  r.estimate = static_cast<double>(successes) / static_cast<double>(trials);
  r.stderr_ = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(trials));
  r.ci_lo = std::min(ci.lo, r.estimate);
  r.ci_hi = std::max(ci.hi, r.estimate);
  return r;
}

EstimateResult mean_estimate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_estimate: empty sample");
  RunningStats s;
  for (double v : values) s.add(v);
  EstimateResult r;
  r.replicas = s.count();
  r.estimate = s.mean();
  r.stderr_ = s.stderr_of_mean();
  r.ci_lo = r.estimate - 1.959963984540054 * r.stderr_;
  r.ci_hi = r.estimate + 1.959963984540054 * r.stderr_;
  return r;
}

bool intervals_overlap(const EstimateResult& a, const EstimateResult& b) {
  return a.ci_lo <= b.ci_hi && b.ci_lo <= a.ci_hi;
}

void RunningStats::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

double RunningStats::variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

double RunningStats::stderr_of_mean() const {
  return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

}  // namespace rcm
