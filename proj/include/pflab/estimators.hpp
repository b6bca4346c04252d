#pragma once

// Measurements on trained networks and generated samples: Lipschitz
// estimates, histograms, and divergences against an analytic mixture.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pflab/gauss.hpp"
#include "pflab/network.hpp"

namespace pflab {

struct LipschitzEstimate {
  double empirical_lower = 0.0;  // max |g'(z)| over the grid
  double certified_upper = 0.0;  // layer spectral-norm product
  double lo = -5.0;
  double hi = 5.0;
  std::size_t grid_points = 0;
};

inline constexpr double kLipGridLo = -5.0;
inline constexpr double kLipGridHi = 5.0;
inline constexpr std::size_t kLipGridPoints = 100000;

/// Evaluates |d net / dz| on n_grid evenly spaced points of [lo, hi]. For
/// conditioned networks `sigma` selects the noise level.
LipschitzEstimate empirical_lipschitz(const nn::Network& net, double lo = kLipGridLo, double hi = kLipGridHi,
                                      std::size_t n_grid = kLipGridPoints,
                                      std::optional<double> sigma = std::nullopt);

/// Grid point i of n on [lo, hi]; the end points are hit exactly.
double grid_point(double lo, double hi, std::size_t i, std::size_t n);

struct EmpiricalHistogram {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t n = 0;
  std::uint64_t out_of_range = 0;

  std::size_t bins() const { return counts.size(); }
};

/// Equal-width bins, left-closed and right-open except the last, which is
/// closed. Values outside [lo, hi] (and NaN) count as out of range.
EmpiricalHistogram build_histogram(std::span<const double> samples, double lo, double hi, std::size_t bins);
/// Range [min - 1, max + 1] of the samples.
EmpiricalHistogram build_histogram(std::span<const double> samples, std::size_t bins = 200);

/// Half the L1 distance between bin frequencies and mixture bin masses, with
/// the out-of-range mass compared to the mixture mass outside [lo, hi].
double empirical_tv(const EmpiricalHistogram& hist, const GaussianMixture& nu);

struct KlEstimate {
  double value = 0.0;
  /// Bin whose mixture mass underflowed while holding samples; bins() denotes
  /// the out-of-range cell.
  std::optional<std::size_t> infinite_bin;
};

KlEstimate empirical_kl(const EmpiricalHistogram& hist, const GaussianMixture& nu);

/// Fraction of samples in the closed interval [a, b].
double interval_mass(std::span<const double> samples, double a, double b);

/// Fraction of samples at or left of `midpoint`.
double mode_proportion(std::span<const double> samples, double midpoint);

}  // namespace pflab
