#include "pflab/gauss.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pflab/errors.hpp"
#include "pflab/numeric.hpp"

namespace pflab {

namespace {

constexpr double kInvSqrt2 = 0.707106781186547524400844362105;

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw DomainError(std::string(what) + ": non-finite argument");
  }
}

// Acklam's rational approximation of the lower half of the quantile
// (relative error below 1.2e-9), valid for 0 < p <= 0.5.
double quantile_initial(double p) {
  static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02,
                                           -2.759285104469687e+02, 1.383577518672690e+02,
                                           -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02,
                                           -1.556989798598866e+02, 6.680131188771972e+01,
                                           -1.328068155288572e+01};
  static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01,
                                           -2.400758277161838e+00, -2.549732539343734e+00,
                                           4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01,
                                           2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Phi(v) split as c + t with c in {0, 1} and |t| <= 1/2, t carrying the tail
// with full relative precision.
struct SplitCdf {
  double whole;
  double tail;
};

SplitCdf split_cdf(double v) {
  if (v <= 0.0) return {0.0, std_normal_cdf(v)};
  return {1.0, -std_normal_sf(v)};
}

}  // namespace

double std_normal_pdf(double x) {
  require_finite(x, "std_normal_pdf");
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double log_std_normal_pdf(double x) {
  require_finite(x, "log_std_normal_pdf");
  return -kLogSqrt2Pi - 0.5 * x * x;
}

double std_normal_cdf(double x) {
  require_finite(x, "std_normal_cdf");
  return 0.5 * std::erfc(-x * kInvSqrt2);
}

double std_normal_sf(double x) {
  require_finite(x, "std_normal_sf");
  return 0.5 * std::erfc(x * kInvSqrt2);
}

double log_std_normal_cdf(double x) {
  require_finite(x, "log_std_normal_cdf");
  if (x > -1.0) return std::log1p(-std_normal_sf(x));
  if (x > -37.0) return std::log(std_normal_cdf(x));
  // Asymptotic Mills-ratio expansion; erfc underflows below here.
  const double inv2 = 1.0 / (x * x);
  const double series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2));
  return log_std_normal_pdf(x) - std::log(-x) + std::log(series);
}

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("std_normal_quantile: p must lie in (0, 1), got " + std::to_string(p));
  }
  if (p == 0.5) return 0.0;
  // Work on the lower half; 1 - p is exact for p >= 1/2.
  const bool upper = p > 0.5;
  const double q = upper ? 1.0 - p : p;
  const double log_q = std::log(q);

  double x = quantile_initial(q);
  // Two Newton steps on log Phi(x) = log q. The Mills ratio Phi/phi is formed
  // in log space so the iteration stays finite deep in the tail.
  for (int it = 0; it < 2; ++it) {
    const double log_cdf = log_std_normal_cdf(x);
    const double mills = std::exp(log_cdf - log_std_normal_pdf(x));
    x -= (log_cdf - log_q) * mills;
  }
  return upper ? -x : x;
}

double normal_interval_mass(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) throw DomainError("normal_interval_mass: NaN bound");
  if (a > b) throw DomainError("normal_interval_mass: a > b");
  if (a == b) return 0.0;
  // erfc/erf accept infinite arguments.
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  return 0.5 * (std::erf(b * kInvSqrt2) + std::erf(-a * kInvSqrt2));
}

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw DomainError("GaussianMixture: no components");
  double total = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw DomainError("GaussianMixture: weights must be positive");
    }
    if (!(c.sigma > 0.0) || !std::isfinite(c.sigma)) {
      throw DomainError("GaussianMixture: sigma must be positive");
    }
    if (!std::isfinite(c.mean)) throw DomainError("GaussianMixture: non-finite mean");
    if (i > 0 && !(c.mean > components_[i - 1].mean)) {
      throw DomainError("GaussianMixture: means must be strictly increasing");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError("GaussianMixture: weights must sum to 1");
  }
}

GaussianMixture GaussianMixture::balanced(double m, double sigma) {
  if (m < 0.0) throw DomainError("GaussianMixture::balanced: m must be nonnegative");
  if (m == 0.0) return single(0.0, sigma);
  return GaussianMixture({{0.5, -m, sigma}, {0.5, m, sigma}});
}

GaussianMixture GaussianMixture::single(double mean, double sigma) {
  return GaussianMixture({{1.0, mean, sigma}});
}

void TwoModeSpec::validate() const {
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw DomainError("TwoModeSpec: separation must be nonnegative");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("TwoModeSpec: sigma must be positive");
  if (!(lambda > 0.0 && lambda < 1.0)) throw DomainError("TwoModeSpec: lambda must lie in (0, 1)");
}

GaussianMixture TwoModeSpec::mixture() const {
  validate();
  if (separation == 0.0) return GaussianMixture::single(0.0, sigma);
  const double h = 0.5 * separation;
  return GaussianMixture({{lambda, -h, sigma}, {1.0 - lambda, h, sigma}});
}

double mixture_log_pdf(const GaussianMixture& nu, double x) {
  require_finite(x, "mixture_log_pdf");
  double hi = -std::numeric_limits<double>::infinity();
  std::array<double, 64> small{};
  std::vector<double> large;
  double* terms = small.data();
  if (nu.size() > small.size()) {
    large.resize(nu.size());
    terms = large.data();
  }
  std::size_t k = 0;
  for (const auto& c : nu.components()) {
    const double u = (x - c.mean) / c.sigma;
    terms[k] = std::log(c.weight) - std::log(c.sigma) - kLogSqrt2Pi - 0.5 * u * u;
    hi = std::max(hi, terms[k]);
    ++k;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += std::exp(terms[i] - hi);
  return hi + std::log(acc);
}

double mixture_pdf(const GaussianMixture& nu, double x) { return std::exp(mixture_log_pdf(nu, x)); }

double mixture_cdf(const GaussianMixture& nu, double x) {
  if (std::isnan(x)) throw DomainError("mixture_cdf: NaN argument");
  double acc = 0.0;
  for (const auto& c : nu.components()) {
    acc += c.weight * normal_interval_mass(-std::numeric_limits<double>::infinity(), (x - c.mean) / c.sigma);
  }
  return std::min(acc, 1.0);
}

double mixture_mass_interval(const GaussianMixture& nu, double a, double b) {
  if (std::isnan(a) || std::isnan(b)) throw DomainError("mixture_mass_interval: NaN bound");
  if (a > b) throw DomainError("mixture_mass_interval: a > b");
  double acc = 0.0;
  for (const auto& c : nu.components()) {
    acc += c.weight * normal_interval_mass((a - c.mean) / c.sigma, (b - c.mean) / c.sigma);
  }
  return std::clamp(acc, 0.0, 1.0);
}

double mixture_cdf_gap(const GaussianMixture& nu, double t, double x) {
  require_finite(t, "mixture_cdf_gap");
  require_finite(x, "mixture_cdf_gap");
  // sum_i w_i (Phi(u_i) - Phi(x)), using sum_i w_i = 1.
  const SplitCdf sx = split_cdf(x);
  CompensatedSum sum;
  for (const auto& c : nu.components()) {
    const SplitCdf su = split_cdf((t - c.mean) / c.sigma);
    sum.add(c.weight * (su.whole - sx.whole));
    sum.add_product(c.weight, su.tail);
    sum.add_product(-c.weight, sx.tail);
  }
  return sum.value();
}

}  // namespace pflab
