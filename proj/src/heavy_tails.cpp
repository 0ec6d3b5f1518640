#include "rcm/heavy_tails.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace rcm {

namespace {

bool in_unit_open(double a) { return a > 0.0 && a < 1.0; }

double safe_exp(double log_value) {
  return log_value > std::log(std::numeric_limits<double>::max())
             ? std::numeric_limits<double>::infinity()
             : std::exp(log_value);
}

// inf{t > 0 : survival(t) <= level} for a nonincreasing survival function, by
// bisection on [0, hi]. Only used for the corner cases without a closed form.
double invert_survival(const std::function<double(double)>& survival, double level) {
  if (survival(0.0) <= level) return 0.0;
  double lo = 0.0;
  double hi = 1.0;
  while (survival(hi) > level) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (survival(mid) > level ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace

std::string to_string(Mode mode) { return mode == Mode::RW ? "RW" : "RWT"; }

Mode mode_from_string(const std::string& text) {
  if (text == "RW") return Mode::RW;
  if (text == "RWT") return Mode::RWT;
  throw std::invalid_argument("unknown mode '" + text + "' (expected RW or RWT)");
}

ModelParams ModelParams::walls(double alpha0, double lambda) {
  ModelParams params;
  params.alpha0 = alpha0;
  params.lambda = lambda;
  params.mode = Mode::RW;
  params.validate();
  return params;
}

ModelParams ModelParams::walls_and_traps(double alpha0, double alpha_inf, double p, double lambda) {
  ModelParams params;
  params.alpha0 = alpha0;
  params.alpha_inf = alpha_inf;
  params.p = p;
  params.lambda = lambda;
  params.mode = Mode::RWT;
  params.validate();
  return params;
}

void ModelParams::validate() const {
  if (!in_unit_open(alpha0)) throw std::invalid_argument("alpha0 must lie in (0, 1)");
  if (!std::isfinite(lambda)) throw std::invalid_argument("lambda must be finite");
  if (mode == Mode::RWT) {
    if (!alpha_inf || !in_unit_open(*alpha_inf))
      throw std::invalid_argument("alpha_inf must lie in (0, 1) under RWT");
    if (!in_unit_open(p)) throw std::invalid_argument("p must lie in (0, 1) under RWT");
  }
}

double ModelParams::alpha_traps() const {
  if (mode != Mode::RWT || !alpha_inf) throw std::logic_error("alpha_inf is only defined under RWT");
  return *alpha_inf;
}

double pareto_quantile(double u, double alpha) {
  if (!(u > 0.0 && u <= 1.0)) throw std::invalid_argument("pareto_quantile: u must lie in (0, 1]");
  if (!in_unit_open(alpha)) throw std::invalid_argument("pareto_quantile: alpha must lie in (0, 1)");
  return std::pow(u, -1.0 / alpha);
}

EdgeDraw sample_edge_law(const ModelParams& params, Stream& rng) {
  if (params.mode == Mode::RWT && rng.uniform() < params.p) {
    const double c = pareto_quantile(rng.uniform_pos(), *params.alpha_inf);
    return {c, 1.0 / c};
  }
  const double r = pareto_quantile(rng.uniform_pos(), params.alpha0);
  return {1.0 / r, r};
}

double resistance_survival(const ModelParams& params, double t) {
  const double q = params.mode == Mode::RWT ? 1.0 - params.p : 1.0;
  if (t >= 1.0) return q * std::pow(t, -params.alpha0);
  if (params.mode == Mode::RW || t <= 0.0) return 1.0;
  // conductance-type edges have r = 1/c in (0, 1]; P(1/c > t) = P(c < 1/t)
  return q + params.p * (1.0 - std::pow(t, *params.alpha_inf));
}

double conductance_survival(const ModelParams& params, double t) {
  if (params.mode == Mode::RWT) {
    if (t >= 1.0) return params.p * std::pow(t, -*params.alpha_inf);
    if (t <= 0.0) return 1.0;
    return params.p + (1.0 - params.p) * (1.0 - std::pow(t, params.alpha0));
  }
  if (t >= 1.0) return 0.0;
  if (t <= 0.0) return 1.0;
  return 1.0 - std::pow(t, params.alpha0);
}

double mean_conductance(const ModelParams& params) {
  params.validate();
  const double walls = params.alpha0 / (params.alpha0 + 1.0);
  if (params.mode == Mode::RW) return walls;
  const double ai = *params.alpha_inf;
  if (ai <= 1.0) return std::numeric_limits<double>::infinity();
  return params.p * ai / (ai - 1.0) + (1.0 - params.p) * walls;
}

ScaleSet scaling_terms(const ModelParams& params, long long n) {
  params.validate();
  if (n < 1) throw std::invalid_argument("scaling_terms: n must be >= 1");
  ScaleSet s;
  s.n = n;
  const double nn = static_cast<double>(n);
  const double q = params.mode == Mode::RWT ? 1.0 - params.p : 1.0;

  if (q * nn >= 1.0) {
    s.log_d_n0 = std::log(q * nn) / params.alpha0;
    s.d_n0 = safe_exp(s.log_d_n0);
  } else {
    s.d_n0 = invert_survival([&](double t) { return resistance_survival(params, t); }, 1.0 / nn);
    s.log_d_n0 = std::log(s.d_n0);
  }
  // the conditioned resistance r given r > 1 is Pareto(alpha0) on [1, inf)
  s.d_star_n0 = safe_exp(std::log(nn) / params.alpha0);
  s.log_a_n = std::log(nn) + s.log_d_n0;
  s.a_n = safe_exp(s.log_a_n);

  if (params.mode == Mode::RWT) {
    const double ai = *params.alpha_inf;
    if (params.p * nn >= 1.0) {
      s.log_d_ninf = std::log(params.p * nn) / ai;
      s.d_ninf = safe_exp(s.log_d_ninf);
    } else {
      s.d_ninf = invert_survival([&](double t) { return conductance_survival(params, t); }, 1.0 / nn);
      s.log_d_ninf = std::log(s.d_ninf);
    }
    s.d_star_ninf = safe_exp(std::log(nn) / ai);
    s.log_b_n = s.log_d_ninf + s.log_d_n0;
    s.b_n = safe_exp(s.log_b_n);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.d_ninf = s.b_n = s.d_star_ninf = nan;
    s.log_d_ninf = s.log_b_n = nan;
  }
  return s;
}

double empirical_scale(const CustomEdgeLaw& law, long long n, bool resistances, std::size_t draws,
                       Stream& rng) {
  if (n < 1 || draws == 0) throw std::invalid_argument("empirical_scale: need n >= 1 and draws > 0");
  std::vector<double> values(draws);
  for (auto& v : values) {
    const EdgeDraw e = law.sample(rng);
    v = resistances ? e.r : e.c;
  }
  std::sort(values.begin(), values.end());
  // the empirical survival drops to <= 1/n at the value with at most draws/n larger samples
  const auto allowed = static_cast<std::size_t>(std::floor(static_cast<double>(draws) / static_cast<double>(n)));
  if (allowed >= draws) return 0.0;
  return values[draws - 1 - allowed];
}

namespace {

// Zolotarev's function for the one-sided stable law, in log form.
double log_zolotarev(double alpha, double phi) {
  const double s_alpha = std::sin(alpha * phi);
  const double s_one = std::sin(phi);
  const double s_rest = std::sin((1.0 - alpha) * phi);
  double ratio;
  if (phi < 1e-8) {
    ratio = alpha;
  } else {
    ratio = s_alpha / s_one;
  }
  if (!(s_one > 0.0)) return std::numeric_limits<double>::infinity();
  const double log_ratio = phi < 1e-8 ? std::log(alpha) : std::log(ratio);
  const double log_tail = phi < 1e-8 ? std::log((1.0 - alpha) / alpha) : std::log(s_rest / s_alpha);
  return log_ratio / (1.0 - alpha) + log_tail;
}

double standardize(double alpha, double x) {
  // S = Gamma(1-alpha)^{1/alpha} S_std where E exp(-l S_std) = exp(-l^alpha)
  return x / std::pow(boost::math::tgamma(1.0 - alpha), 1.0 / alpha);
}

template <class F>
double integrate_phi(F&& f) {
  double error = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::numbers::pi, 15,
                                                                       1e-12, &error);
}

void check_stable_args(double alpha, double x) {
  if (!in_unit_open(alpha)) throw std::invalid_argument("stable law: alpha must lie in (0, 1)");
  if (!(x > 0.0)) throw std::invalid_argument("stable law: x must be positive");
}

}  // namespace

double stable_marginal_cdf(double alpha, double x) {
  check_stable_args(alpha, x);
  if (std::isinf(x)) return 1.0;
  const double log_scale = -alpha / (1.0 - alpha) * std::log(standardize(alpha, x));
  const double value = integrate_phi([&](double phi) {
    const double z = log_zolotarev(alpha, phi) + log_scale;
    return z > 700.0 ? 0.0 : std::exp(-std::exp(z));
  });
  return std::clamp(value / std::numbers::pi, 0.0, 1.0);
}

double stable_marginal_survival(double alpha, double x) {
  check_stable_args(alpha, x);
  if (std::isinf(x)) return 0.0;
  const double log_scale = -alpha / (1.0 - alpha) * std::log(standardize(alpha, x));
  const double value = integrate_phi([&](double phi) {
    const double z = log_zolotarev(alpha, phi) + log_scale;
    return z > 700.0 ? 1.0 : -std::expm1(-std::exp(z));
  });
  return std::clamp(value / std::numbers::pi, 0.0, 1.0);
}

double compensation_rate(double alpha, double epsilon) {
  return alpha * std::pow(epsilon, 1.0 - alpha) / (1.0 - alpha);
}

SubordinatorPath::SubordinatorPath(double alpha, double half_width, double epsilon,
                                   std::vector<Jump> atoms, Tilt tilt, double lambda)
    : alpha_(alpha),
      half_width_(half_width),
      epsilon_(epsilon),
      compensation_rate_(rcm::compensation_rate(alpha, epsilon)),
      tilt_(tilt),
      lambda_(lambda),
      atoms_(std::move(atoms)) {
  if (!in_unit_open(alpha)) throw std::invalid_argument("subordinator: alpha must lie in (0, 1)");
  if (!(half_width > 0.0) || !(epsilon > 0.0))
    throw std::invalid_argument("subordinator: need K > 0 and epsilon > 0");
  std::sort(atoms_.begin(), atoms_.end(), [](const Jump& a, const Jump& b) { return a.u < b.u; });
  prefix_.resize(atoms_.size() + 1, 0.0);
  for (std::size_t k = 0; k < atoms_.size(); ++k) prefix_[k + 1] = prefix_[k] + tilted_jump(k);
  prefix_at_zero_ = prefix_through(0.0, true);
}

SubordinatorPath SubordinatorPath::with_lambda(double lambda) const {
  return SubordinatorPath(alpha_, half_width_, epsilon_, atoms_, tilt_, lambda);
}

double SubordinatorPath::tilt_factor(double u) const {
  if (lambda_ == 0.0) return 1.0;
  const double sign = tilt_ == Tilt::Decreasing ? -1.0 : 1.0;
  return std::exp(sign * 2.0 * lambda_ * u);
}

double SubordinatorPath::tilted_jump(std::size_t index) const {
  return atoms_[index].w * tilt_factor(atoms_[index].u);
}

double SubordinatorPath::drift(double t) const {
  if (lambda_ == 0.0) return compensation_rate_ * t;
  const double k = (tilt_ == Tilt::Decreasing ? -2.0 : 2.0) * lambda_;
  return compensation_rate_ * std::expm1(k * t) / k;
}

double SubordinatorPath::prefix_through(double t, bool inclusive) const {
  auto it = inclusive ? std::upper_bound(atoms_.begin(), atoms_.end(), t,
                                         [](double v, const Jump& j) { return v < j.u; })
                      : std::lower_bound(atoms_.begin(), atoms_.end(), t,
                                         [](const Jump& j, double v) { return j.u < v; });
  return prefix_[static_cast<std::size_t>(it - atoms_.begin())];
}

double SubordinatorPath::operator()(double t) const {
  return prefix_through(t, true) - prefix_at_zero_ + drift(t);
}

double SubordinatorPath::left_limit(double t) const {
  return prefix_through(t, false) - prefix_at_zero_ + drift(t);
}

double SubordinatorPath::untilted_increment(double a, double b) const {
  if (b < a) throw std::invalid_argument("untilted_increment: need a <= b");
  const auto [first, last] = atoms_in(a, b);
  double sum = compensation_rate_ * (b - a);
  for (std::size_t k = first; k < last; ++k) sum += atoms_[k].w;
  return sum;
}

std::pair<std::size_t, std::size_t> SubordinatorPath::atoms_in(double a, double b) const {
  auto first = std::upper_bound(atoms_.begin(), atoms_.end(), a,
                                [](double v, const Jump& j) { return v < j.u; });
  auto last = std::upper_bound(atoms_.begin(), atoms_.end(), b,
                               [](double v, const Jump& j) { return v < j.u; });
  return {static_cast<std::size_t>(first - atoms_.begin()),
          static_cast<std::size_t>(last - atoms_.begin())};
}

std::vector<double> SubordinatorPath::cell_increments(long long n, long long k_begin,
                                                      long long k_end) const {
  if (n < 1 || k_end < k_begin) throw std::invalid_argument("cell_increments: bad range");
  const double nn = static_cast<double>(n);
  std::vector<double> out(static_cast<std::size_t>(k_end - k_begin), compensation_rate_ / nn);
  const double lo = static_cast<double>(k_begin) / nn;
  const double hi = static_cast<double>(k_end) / nn;
  const auto [first, last] = atoms_in(lo, hi);
  for (std::size_t j = first; j < last; ++j) {
    // cell k holds the atoms with k < u n <= k + 1
    long long k = static_cast<long long>(std::ceil(atoms_[j].u * nn)) - 1;
    k = std::clamp(k, k_begin, k_end - 1);
    out[static_cast<std::size_t>(k - k_begin)] += atoms_[j].w;
  }
  return out;
}

std::optional<std::size_t> SubordinatorPath::jump_containing(double y) const {
  // S(u) is increasing in u, so bisect on the right limits
  std::size_t lo = 0, hi = atoms_.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if ((*this)(atoms_[mid].u) <= y)
      lo = mid + 1;
    else
      hi = mid;
  }
  if (lo == atoms_.size()) return std::nullopt;
  if (left_limit(atoms_[lo].u) <= y) return lo;
  return std::nullopt;
}

SubordinatorPath sample_subordinator(double alpha, double half_width, double epsilon, Stream& rng,
                                     Tilt tilt, double lambda) {
  if (!in_unit_open(alpha)) throw std::invalid_argument("sample_subordinator: alpha must lie in (0, 1)");
  if (!(half_width > 0.0) || !(epsilon > 0.0))
    throw std::invalid_argument("sample_subordinator: need K > 0 and epsilon > 0");
  const double mean_count = 2.0 * half_width * std::pow(epsilon, -alpha);
  std::poisson_distribution<long long> count_dist(mean_count);
  const long long count = count_dist(rng);
  std::vector<Jump> atoms(static_cast<std::size_t>(count));
  for (auto& a : atoms) {
    a.u = -half_width + 2.0 * half_width * rng.uniform();
    a.w = epsilon * std::pow(rng.uniform_pos(), -1.0 / alpha);
  }
  std::sort(atoms.begin(), atoms.end(), [](const Jump& a, const Jump& b) { return a.u < b.u; });
  // ties have probability ~0 but the path requires distinct locations
  for (std::size_t k = 1; k < atoms.size(); ++k)
    if (!(atoms[k].u > atoms[k - 1].u)) atoms[k].u = std::nextafter(atoms[k - 1].u, half_width);
  return SubordinatorPath(alpha, half_width, epsilon, std::move(atoms), tilt, lambda);
}

}  // namespace rcm
