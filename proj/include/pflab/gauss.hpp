#pragma once

#include <span>
#include <vector>

namespace pflab {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

/// Standard normal density. Throws DomainError on non-finite input.
double std_normal_pdf(double x);
double log_std_normal_pdf(double x);

/// Standard normal CDF, evaluated through erfc on both sides so that the
/// lower tail keeps full relative precision.
double std_normal_cdf(double x);

/// Upper tail 1 - Phi(x) without cancellation.
double std_normal_sf(double x);

/// log Phi(x), accurate in both tails.
double log_std_normal_cdf(double x);

/// Inverse CDF. p must lie strictly inside (0, 1); nothing is clamped.
double std_normal_quantile(double p);

/// Integral of the standard normal density over [a, b]. Infinite endpoints are
/// accepted. The result is computed from tail masses on the appropriate side of
/// zero so that narrow intervals far in the tails keep relative precision.
double normal_interval_mass(double a, double b);

struct GaussianComponent {
  double weight;
  double mean;
  double sigma;
};

/// Weighted one-dimensional Gaussian mixture with canonically ordered means.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  /// (1/2)[N(-m, s^2) + N(m, s^2)]; m = 0 collapses to N(0, s^2).
  static GaussianMixture balanced(double m, double sigma = 1.0);
  static GaussianMixture single(double mean, double sigma);

  std::span<const GaussianComponent> components() const { return components_; }
  std::size_t size() const { return components_.size(); }

  bool operator==(const GaussianMixture&) const = default;

 private:
  std::vector<GaussianComponent> components_;
};

/// Two-Gaussian family shared by the closed-form corollaries.
struct TwoModeSpec {
  double separation;  // |m2 - m1|
  double sigma;
  double lambda;      // weight of the first component

  void validate() const;
  GaussianMixture mixture() const;
};

double mixture_log_pdf(const GaussianMixture& nu, double x);
double mixture_pdf(const GaussianMixture& nu, double x);
double mixture_cdf(const GaussianMixture& nu, double x);

/// nu([a, b]); a may be -inf and b may be +inf.
double mixture_mass_interval(const GaussianMixture& nu, double a, double b);

/// F_nu(t) - Phi(x) evaluated with error-free products and compensated
/// summation. Used by the monotone transport solver where F_nu is extremely
/// flat between separated modes.
double mixture_cdf_gap(const GaussianMixture& nu, double t, double x);

}  // namespace pflab
