#include "pflab/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pflab/errors.hpp"
#include "pflab/numeric.hpp"

namespace pflab {

double grid_point(double lo, double hi, std::size_t i, std::size_t n) {
  if (n < 2) return lo;
  if (i + 1 == n) return hi;
  return lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(n - 1));
}

LipschitzEstimate empirical_lipschitz(const nn::Network& net, double lo, double hi, std::size_t n_grid,
                                      std::optional<double> sigma) {
  if (!(lo < hi)) throw DomainError("empirical_lipschitz: need lo < hi");
  if (n_grid < 2) throw DomainError("empirical_lipschitz: need at least two grid points");
  if (net.input_dim() != 1 || net.output_dim() != 1) {
    throw ConfigError("empirical_lipschitz: one-dimensional network required");
  }
  nn::Matrix z(static_cast<Eigen::Index>(n_grid), 1);
  for (std::size_t i = 0; i < n_grid; ++i) z(static_cast<Eigen::Index>(i), 0) = grid_point(lo, hi, i, n_grid);
  const nn::Matrix jac = nn::input_jacobian(net, z, sigma);
  LipschitzEstimate est;
  est.empirical_lower = jac.cwiseAbs().maxCoeff();
  est.certified_upper = nn::certified_lipschitz(net);
  est.lo = lo;
  est.hi = hi;
  est.grid_points = n_grid;
  return est;
}

EmpiricalHistogram build_histogram(std::span<const double> samples, double lo, double hi, std::size_t bins) {
  if (bins < 1) throw DomainError("build_histogram: need at least one bin");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw DomainError("build_histogram: need lo < hi");
  EmpiricalHistogram h;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = grid_point(lo, hi, i, bins + 1);
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double x : samples) {
    ++h.n;
    if (!(x >= lo && x <= hi)) {
      ++h.out_of_range;
      continue;
    }
    auto k = static_cast<std::size_t>((x - lo) / width);
    k = std::min(k, bins - 1);
    // Correct the arithmetic guess against the stored edges.
    while (k > 0 && x < h.edges[k]) --k;
    while (k + 1 < bins && x >= h.edges[k + 1]) ++k;
    ++h.counts[k];
  }
  return h;
}

EmpiricalHistogram build_histogram(std::span<const double> samples, std::size_t bins) {
  if (samples.empty()) throw DomainError("build_histogram: empty sample");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  return build_histogram(samples, *mn - 1.0, *mx + 1.0, bins);
}

namespace {

void require_counts(const EmpiricalHistogram& h) {
  if (h.n == 0) throw DomainError("histogram holds no samples");
  if (h.edges.size() != h.counts.size() + 1) throw DomainError("histogram edges and counts disagree");
}

double outside_mass(const EmpiricalHistogram& h, const GaussianMixture& nu) {
  const double inf = std::numeric_limits<double>::infinity();
  return mixture_mass_interval(nu, -inf, h.edges.front()) + mixture_mass_interval(nu, h.edges.back(), inf);
}

}  // namespace

double empirical_tv(const EmpiricalHistogram& hist, const GaussianMixture& nu) {
  require_counts(hist);
  const double n = static_cast<double>(hist.n);
  CompensatedSum sum;
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    const double q = mixture_mass_interval(nu, hist.edges[i], hist.edges[i + 1]);
    sum.add(std::abs(static_cast<double>(hist.counts[i]) / n - q));
  }
  sum.add(std::abs(static_cast<double>(hist.out_of_range) / n - outside_mass(hist, nu)));
  return std::clamp(0.5 * sum.value(), 0.0, 1.0);
}

KlEstimate empirical_kl(const EmpiricalHistogram& hist, const GaussianMixture& nu) {
  require_counts(hist);
  const double n = static_cast<double>(hist.n);
  CompensatedSum sum;
  KlEstimate out;
  auto term = [&](std::uint64_t count, double q, std::size_t bin) {
    if (count == 0) return;
    const double p = static_cast<double>(count) / n;
    if (!(q > 0.0)) {
      if (!out.infinite_bin) out.infinite_bin = bin;
      return;
    }
    sum.add(p * std::log(p / q));
  };
  for (std::size_t i = 0; i < hist.bins(); ++i) {
    term(hist.counts[i], mixture_mass_interval(nu, hist.edges[i], hist.edges[i + 1]), i);
  }
  term(hist.out_of_range, outside_mass(hist, nu), hist.bins());
  if (out.infinite_bin) {
    out.value = std::numeric_limits<double>::infinity();
    return out;
  }
  out.value = std::max(sum.value(), 0.0);
  return out;
}

double interval_mass(std::span<const double> samples, double a, double b) {
  if (a > b) throw DomainError("interval_mass: need a <= b");
  if (samples.empty()) throw DomainError("interval_mass: empty sample");
  std::size_t k = 0;
  for (double x : samples) k += (x >= a && x <= b) ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(samples.size());
}

double mode_proportion(std::span<const double> samples, double midpoint) {
  if (samples.empty()) throw DomainError("mode_proportion: empty sample");
  std::size_t k = 0;
  for (double x : samples) k += x <= midpoint ? 1 : 0;
  return static_cast<double>(k) / static_cast<double>(samples.size());
}

}  // namespace pflab
