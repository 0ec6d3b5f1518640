#pragma once

#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rcm {

/// Empirical distribution function of a sample; the sample is kept sorted.
class Ecdf {
 public:
  Ecdf() = default;
  explicit Ecdf(std::vector<double> sample);

  double operator()(double x) const;
  std::size_t size() const { return sorted_.size(); }
  bool empty() const { return sorted_.empty(); }
  const std::vector<double>& sorted() const { return sorted_; }
  double mean() const;

 private:
  std::vector<double> sorted_;
};

/// sup |F_a - F_b| for two empirical distributions.
double ks_distance(const Ecdf& a, const Ecdf& b);
/// sup |F_a - F| against a continuous reference CDF.
template <class Cdf>
double ks_distance_to(const Ecdf& a, Cdf&& cdf) {
  double d = 0.0;
  const auto& s = a.sorted();
  const double m = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    const double lo = static_cast<double>(i) / m;
    const double hi = static_cast<double>(i + 1) / m;
    d = std::max(d, std::max(f - lo, hi - f));
  }
  return d;
}

/// Kolmogorov survival Q(t) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2).
double kolmogorov_survival(double t);
/// Asymptotic p-value of the two-sample statistic with Stephens' small-sample correction.
double ks_pvalue(double distance, std::size_t n_a, std::size_t n_b);
/// One-sample version.
double ks_pvalue_one_sample(double distance, std::size_t n);

struct Interval {
  double lo;
  double hi;
};

/// Wilson 95% score interval for a binomial proportion.
Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = 1.959963984540054);

/// Monte Carlo estimate with a 95% interval.
struct EstimateResult {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::uint64_t replicas = 0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Proportion estimate; the interval is Wilson's, the standard error binomial.
EstimateResult proportion_estimate(std::uint64_t successes, std::uint64_t trials);
/// Sample-mean estimate with a normal 95% interval.
EstimateResult mean_estimate(std::span<const double> values);

/// True when the two 95% intervals intersect.
bool intervals_overlap(const EstimateResult& a, const EstimateResult& b);

/// Running mean and variance (Welford).
class RunningStats {
 public:
  void add(double x);
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const;
  double stderr_of_mean() const;

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace rcm
