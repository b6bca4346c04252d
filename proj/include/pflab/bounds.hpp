#pragma once

// Lower bounds for push-forwards g#N(0, I) of Lipschitz maps: the Gaussian
// isoperimetric extension bound, the Lipschitz bounds for Gaussian mixtures,
// and the total-variation / Kullback-Leibler bounds derived from them.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pflab/gauss.hpp"

namespace pflab {

/// A Lipschitz constant, the push-forward mass of a set A and an extension
/// radius r.
struct BoundQuery {
  double lip;
  double mass_a;
  double r;

  void validate() const;
};

struct BoundWitness {
  double boundary = 0.0;  // a in A = (-inf, a]
  double r = 0.0;
  std::vector<std::size_t> subset;  // zero-based manifold indices (multimanifold bound)
};

struct BoundReport {
  double value = 0.0;
  bool vacuous = true;
  std::optional<BoundWitness> witness;
};

/// Masses nu(M_i) of N disconnected manifolds and their pairwise distances.
struct ManifoldFamilySpec {
  std::vector<double> masses;
  std::vector<std::vector<double>> distances;

  void validate() const;
};

struct MongeMap1D {
  std::vector<double> grid;
  std::vector<double> values;
  double derivative_sup = 0.0;
  double log_derivative_sup = 0.0;
  double argsup = 0.0;
};

/// Lower bound on g#mu(A_r): Phi(r/lip + Phi^-1(mass)). Masses 0 and 1 map to
/// themselves.
double isoperimetric_extension(const BoundQuery& q);

/// Lower bound on the push-forward surface area of the boundary of A.
double min_surface_area(double lip, double mass_a);

/// Lower bound on g#mu(A_r \ A), i.e. the extension bound minus mass_a.
double min_interpolation_mass(const BoundQuery& q);

/// Smallest Lipschitz constant of any map pushing N(0, I) onto the two-mode
/// mixture. The log version avoids overflow for wide separations.
double lip_lower_bound_two_gaussians(const TwoModeSpec& spec);
double log_lip_lower_bound_two_gaussians(const TwoModeSpec& spec);

/// Monotone transport T = F_nu^-1 o Phi tabulated on [x_lo, x_hi], together with
/// the largest derivative phi(x) / p_nu(T(x)) found on the grid.
MongeMap1D monge_map_1d(const GaussianMixture& nu, double x_lo, double x_hi, std::size_t n_grid);

BoundReport tv_lower_bound_point(double lip, double push_mass_a, double nu_mass_a,
                                 double nu_gap_mass, double r);

/// Grid search over half-lines A = (-inf, -r/2] with the empirical push-forward
/// mass of A.
BoundReport tv_lower_bound_search(double lip, std::span<const double> push_samples,
                                  const GaussianMixture& nu, std::span<const double> r_grid);

BoundReport tv_lower_bound_disconnected(double lambda, double distance, double lip);

BoundReport tv_lower_bound_two_gaussians(const TwoModeSpec& spec, double lip);

BoundReport tv_lower_bound_multimanifold(const ManifoldFamilySpec& spec, double lip);

/// Binary relative entropy bound. Vacuous (value 0) unless beta > max(0, q);
/// q = 0 with beta > 0 yields +infinity.
BoundReport kl_lower_bound_point(double beta, double nu_gap_mass);

BoundReport kl_lower_bound_two_gaussians(const TwoModeSpec& spec, double lip, double lambda_push);

BoundReport kl_lower_bound_search(double lip, std::span<const double> push_samples,
                                  const GaussianMixture& nu, std::span<const double> r_grid);

/// Default search grid: n points evenly spaced on [0.1, 4m].
std::vector<double> default_r_grid(double m, std::size_t n = 400);

inline constexpr std::size_t kMaxManifolds = 20;

}  // namespace pflab
