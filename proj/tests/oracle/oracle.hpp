#pragma once

// High-precision reference values computed with 50-digit floats. Each value
// is derived along a different route than the library: surface-area ratios,
// direct mixture measures and Newton inversion of erfc.

#include <boost/math/special_functions/erf.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <vector>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

inline Real pi() { return boost::math::constants::pi<Real>(); }

inline Real phi(const Real& x) { return exp(-x * x / 2) / sqrt(2 * pi()); }

inline Real Phi(const Real& x) { return boost::math::erfc(-x / sqrt(Real(2))) / 2; }

/// Newton iteration on Phi(x) = p, started from a bisection bracket.
inline Real Phi_inv(const Real& p) {
  Real lo = -40, hi = 40;
  for (int i = 0; i < 60; ++i) {
    const Real mid = (lo + hi) / 2;
    (Phi(mid) < p ? lo : hi) = mid;
  }
  Real x = (lo + hi) / 2;
  for (int i = 0; i < 20; ++i) x -= (Phi(x) - p) / phi(x);
  return x;
}

/// nu([a, b]) for (1/2)[N(-m, s^2) + N(m, s^2)].
inline Real balanced_mass(const Real& m, const Real& s, const Real& a, const Real& b) {
  return (Phi((b + m) / s) - Phi((a + m) / s) + Phi((b - m) / s) - Phi((a - m) / s)) / 2;
}

/// Smallest Lipschitz constant: phi(Phi^-1(lambda)) over the mixture density at
/// the midpoint of the means.
inline Real lip_two_gaussians(const Real& sep, const Real& sigma, const Real& lambda) {
  const Real half = sep / 2;
  const Real dens = (lambda + (1 - lambda)) * phi(half / sigma) / sigma;
  return phi(Phi_inv(lambda)) / dens;
}

/// Pushed mass of (-inf, q] gaining an r / lip extension, minus the start mass.
inline Real extension_gain(const Real& lambda, const Real& r, const Real& lip) {
  return Phi(r / lip + Phi_inv(lambda)) - lambda;
}

inline Real tv_disconnected(const Real& lambda, const Real& dist, const Real& lip) {
  return extension_gain(lambda, dist / 2, lip);
}

/// Balanced two-Gaussian TV bound with H = (-inf, 0], r = m / (2 sigma).
inline Real tv_two_gaussians(const Real& sep, const Real& sigma, const Real& lip) {
  const Real m = sep / 2;
  const Real r = m / (2 * sigma);
  return extension_gain(Real(0.5), r, lip) - balanced_mass(m, sigma, Real(0), r);
}

inline Real kl_two_gaussians(const Real& sep, const Real& sigma, const Real& lip, const Real& lambda_push) {
  const Real m = sep / 2;
  const Real r = m / (2 * sigma);
  const Real a = extension_gain(lambda_push, r, lip);
  const Real b = balanced_mass(m, sigma, Real(0), r);
  return a * log(a / b) + (1 - a) * log((1 - a) / (1 - b));
}

/// Exact mass of g#N(0,1) on [a, a + r] for g(z) = L z.
inline Real linear_pushed_gain(const Real& L, const Real& a, const Real& r) { return Phi((a + r) / L) - Phi(a / L); }

/// log of the largest slope of F_nu^-1 o Phi for the balanced mixture, which
/// sits at the median x = 0 where T(0) = 0.
inline Real log_monge_slope_at_median(const Real& sep, const Real& sigma) {
  const Real m = sep / 2;
  const Real dens = phi(m / sigma) / sigma;
  return log(phi(Real(0)) / dens);
}

}  // namespace oracle
