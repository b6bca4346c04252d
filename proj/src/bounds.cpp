#include "pflab/bounds.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "pflab/errors.hpp"

namespace pflab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_lip(double lip) {
  if (!(lip > 0.0) || std::isnan(lip)) throw DomainError("Lipschitz constant must be positive");
}

void require_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(what) + " must lie in [0, 1]");
}

BoundReport make_report(double value, bool valid = true) {
  BoundReport rep;
  rep.value = value;
  rep.vacuous = !valid || !(value > 0.0);
  return rep;
}

// Integral of phi over [Phi^-1(lambda), Phi^-1(lambda) + shift], shift >= 0.
double gaussian_shift_mass(double lambda, double shift) {
  if (lambda <= 0.0) return 0.0;
  if (lambda >= 1.0) return 0.0;
  const double lo = std_normal_quantile(lambda);
  return normal_interval_mass(lo, lo + shift);
}

// Second integral shared by the two-Gaussian TV and KL bounds.
double two_gaussian_gap_mass(const TwoModeSpec& spec) {
  const double s2 = 4.0 * spec.sigma * spec.sigma;
  const double lo = spec.separation * (2.0 * spec.sigma - 1.0) / s2;
  const double hi = spec.separation * (2.0 * spec.sigma + 1.0) / s2;
  return 0.5 * normal_interval_mass(lo, hi);
}

void require_balanced(const TwoModeSpec& spec) {
  spec.validate();
  if (spec.lambda != 0.5) throw DomainError("two-Gaussian TV/KL bounds require lambda = 1/2");
}

// Better of two reports with lexicographic tie-break on (value, r).
bool improves(const BoundReport& cand, const BoundReport& best) {
  if (cand.value != best.value) return cand.value > best.value;
  return cand.witness && best.witness && cand.witness->r > best.witness->r;
}

std::vector<double> sorted_copy(std::span<const double> xs) {
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  return s;
}

void check_search_inputs(std::span<const double> samples, std::span<const double> r_grid) {
  if (samples.empty()) throw DomainError("bound search: empty sample list");
  if (r_grid.empty()) throw DomainError("bound search: empty r grid");
  for (double r : r_grid) {
    if (!(r > 0.0)) throw DomainError("bound search: r must be positive");
  }
}

double fraction_at_most(const std::vector<double>& sorted, double a) {
  const auto it = std::upper_bound(sorted.begin(), sorted.end(), a);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

}  // namespace

void BoundQuery::validate() const {
  require_lip(lip);
  require_probability(mass_a, "BoundQuery mass");
  if (!(r >= 0.0)) throw DomainError("BoundQuery: r must be nonnegative");
}

void ManifoldFamilySpec::validate() const {
  const std::size_t n = masses.size();
  if (n < 2) throw DomainError("ManifoldFamilySpec: need at least two manifolds");
  if (distances.size() != n) throw DomainError("ManifoldFamilySpec: distance matrix size mismatch");
  double total = 0.0;
  for (double m : masses) {
    require_probability(m, "manifold mass");
    total += m;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("ManifoldFamilySpec: masses must sum to 1");
  for (std::size_t i = 0; i < n; ++i) {
    if (distances[i].size() != n) throw DomainError("ManifoldFamilySpec: distance matrix not square");
    if (distances[i][i] != 0.0) throw DomainError("ManifoldFamilySpec: nonzero diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && !(distances[i][j] > 0.0)) {
        throw DomainError("ManifoldFamilySpec: off-diagonal distances must be positive");
      }
      if (distances[i][j] != distances[j][i]) throw DomainError("ManifoldFamilySpec: asymmetric distances");
    }
  }
}

double isoperimetric_extension(const BoundQuery& q) {
  q.validate();
  if (q.mass_a == 0.0 || q.mass_a == 1.0) return q.mass_a;
  if (q.r == 0.0) return q.mass_a;
  const double shifted = q.r / q.lip + std_normal_quantile(q.mass_a);
  if (std::isinf(shifted)) return 1.0;
  return std_normal_cdf(shifted);
}

double min_surface_area(double lip, double mass_a) {
  require_lip(lip);
  require_probability(mass_a, "mass_a");
  if (mass_a == 0.0 || mass_a == 1.0) return 0.0;
  return std_normal_pdf(std_normal_quantile(mass_a)) / lip;
}

double min_interpolation_mass(const BoundQuery& q) {
  q.validate();
  if (q.r == 0.0) return 0.0;
  return gaussian_shift_mass(q.mass_a, q.r / q.lip);
}

double log_lip_lower_bound_two_gaussians(const TwoModeSpec& spec) {
  spec.validate();
  const double z = std_normal_quantile(spec.lambda);
  const double s = spec.separation / spec.sigma;
  return std::log(spec.sigma) + s * s / 8.0 - 0.5 * z * z;
}

double lip_lower_bound_two_gaussians(const TwoModeSpec& spec) {
  return std::exp(log_lip_lower_bound_two_gaussians(spec));
}

MongeMap1D monge_map_1d(const GaussianMixture& nu, double x_lo, double x_hi, std::size_t n_grid) {
  if (!(x_lo < x_hi) || !std::isfinite(x_lo) || !std::isfinite(x_hi)) {
    throw DomainError("monge_map_1d: need finite x_lo < x_hi");
  }
  if (n_grid < 1001) throw DomainError("monge_map_1d: n_grid must be at least 1001");

  MongeMap1D map;
  map.grid.resize(n_grid);
  map.values.resize(n_grid);
  map.log_derivative_sup = -kInf;
  const double span = x_hi - x_lo;
  const double eps = std::numeric_limits<double>::epsilon();

  for (std::size_t i = 0; i < n_grid; ++i) {
    const double x = x_lo + span * (static_cast<double>(i) / static_cast<double>(n_grid - 1));
    map.grid[i] = x;

    // Every u_i below x gives F_nu < Phi(x); every u_i above gives F_nu > Phi(x).
    double lo = kInf;
    double hi = -kInf;
    for (const auto& c : nu.components()) {
      lo = std::min(lo, c.mean + c.sigma * x);
      hi = std::max(hi, c.mean + c.sigma * x);
    }
    double t = 0.5 * (lo + hi);
    if (i > 0 && map.values[i - 1] > lo && map.values[i - 1] < hi) t = map.values[i - 1];

    double f = 0.0;
    if (lo < hi) {
      for (int it = 0; it < 400; ++it) {
        f = mixture_cdf_gap(nu, t, x);
        if (f == 0.0) break;
        (f < 0.0 ? lo : hi) = t;
        const double width_tol = 4.0 * eps * std::max({std::abs(lo), std::abs(hi), 1e-300});
        if (hi - lo <= width_tol) break;
        const double density = std::exp(mixture_log_pdf(nu, t));
        double next = density > 0.0 ? t - f / density : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == t) break;
        t = next;
      }
      f = mixture_cdf_gap(nu, t, x);
    } else {
      t = lo;
    }
    if (!(std::abs(f) <= 1e-12)) {
      std::ostringstream os;
      os << "monge_map_1d: root finder did not converge at x = " << x << " (residual " << f << ")";
      throw NumericError(os.str());
    }
    map.values[i] = t;

    const double log_deriv = log_std_normal_pdf(x) - mixture_log_pdf(nu, t);
    if (log_deriv > map.log_derivative_sup) {
      map.log_derivative_sup = log_deriv;
      map.argsup = x;
    }
  }
  map.derivative_sup = std::exp(map.log_derivative_sup);
  return map;
}

BoundReport tv_lower_bound_point(double lip, double push_mass_a, double nu_mass_a,
                                 double nu_gap_mass, double r) {
  require_lip(lip);
  require_probability(push_mass_a, "push_mass_a");
  require_probability(nu_mass_a, "nu_mass_a");
  require_probability(nu_gap_mass, "nu_gap_mass");
  if (!(r > 0.0)) throw DomainError("tv_lower_bound_point: r must be positive");
  const double alpha = isoperimetric_extension({lip, push_mass_a, r});
  const double value = alpha - std::min(push_mass_a, nu_mass_a) - nu_gap_mass;
  return make_report(std::min(value, 1.0));
}

BoundReport tv_lower_bound_search(double lip, std::span<const double> push_samples,
                                  const GaussianMixture& nu, std::span<const double> r_grid) {
  require_lip(lip);
  check_search_inputs(push_samples, r_grid);
  const auto sorted = sorted_copy(push_samples);
  BoundReport best;
  bool first = true;
  for (double r : r_grid) {
    const double a = -0.5 * r;
    BoundReport rep = tv_lower_bound_point(lip, fraction_at_most(sorted, a),
                                           mixture_mass_interval(nu, -kInf, a),
                                           mixture_mass_interval(nu, a, -a), r);
    rep.witness = BoundWitness{a, r, {}};
    if (first || improves(rep, best)) best = std::move(rep);
    first = false;
  }
  return best;
}

BoundReport tv_lower_bound_disconnected(double lambda, double distance, double lip) {
  require_lip(lip);
  if (!(lambda >= 0.5 && lambda < 1.0)) {
    throw DomainError("tv_lower_bound_disconnected: lambda must lie in [1/2, 1); pass max(lambda, 1 - lambda)");
  }
  if (!(distance > 0.0)) throw DomainError("tv_lower_bound_disconnected: distance must be positive");
  return make_report(gaussian_shift_mass(lambda, distance / (2.0 * lip)));
}

BoundReport tv_lower_bound_two_gaussians(const TwoModeSpec& spec, double lip) {
  require_balanced(spec);
  require_lip(lip);
  const double first = normal_interval_mass(0.0, spec.separation / (4.0 * spec.sigma * lip));
  return make_report(first - two_gaussian_gap_mass(spec));
}

BoundReport tv_lower_bound_multimanifold(const ManifoldFamilySpec& spec, double lip) {
  require_lip(lip);
  if (spec.masses.size() > kMaxManifolds) {
    throw CapacityError("tv_lower_bound_multimanifold: at most 20 manifolds supported");
  }
  spec.validate();
  const std::size_t n = spec.masses.size();
  const std::uint32_t full = (std::uint32_t{1} << n) - 1;

  BoundReport best;
  best.value = -kInf;
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 1; mask < full; ++mask) {
    double inside = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (1u << i)) inside += spec.masses[i];
    }
    double dist = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(mask & (1u << i))) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (!(mask & (1u << j))) dist = std::min(dist, spec.distances[i][j]);
      }
    }
    const double lambda = std::max(inside, 1.0 - inside);
    const double value = lambda < 1.0 ? gaussian_shift_mass(lambda, dist / (2.0 * lip)) : 0.0;
    if (value > best.value) {
      best.value = value;
      best_mask = mask;
    }
  }
  best = make_report(best.value);
  BoundWitness w;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask & (1u << i)) w.subset.push_back(i);
  }
  best.witness = std::move(w);
  return best;
}

BoundReport kl_lower_bound_point(double beta, double nu_gap_mass) {
  if (std::isnan(beta)) throw DomainError("kl_lower_bound_point: NaN beta");
  if (beta > 1.0) throw DomainError("kl_lower_bound_point: beta must not exceed 1");
  if (!(nu_gap_mass >= 0.0 && nu_gap_mass <= 1.0)) {
    throw DomainError("kl_lower_bound_point: nu_gap_mass must lie in [0, 1]");
  }
  const double q = nu_gap_mass;
  if (beta <= std::max(0.0, q)) return make_report(0.0, false);
  if (q == 0.0) return make_report(kInf);
  double value = beta * std::log(beta / q);
  if (beta < 1.0) value += (1.0 - beta) * (std::log1p(-beta) - std::log1p(-q));
  return make_report(value);
}

BoundReport kl_lower_bound_two_gaussians(const TwoModeSpec& spec, double lip, double lambda_push) {
  require_balanced(spec);
  require_lip(lip);
  if (!(lambda_push > 0.0 && lambda_push <= 0.5)) {
    throw DomainError("kl_lower_bound_two_gaussians: lambda_push must lie in (0, 1/2]");
  }
  // Phi^-1(1 - lambda) written as -Phi^-1(lambda) to keep precision near 0.
  const double s = -std_normal_quantile(lambda_push);
  const double a = normal_interval_mass(-s, spec.separation / (4.0 * spec.sigma * lip) - s);
  return kl_lower_bound_point(a, two_gaussian_gap_mass(spec));
}

BoundReport kl_lower_bound_search(double lip, std::span<const double> push_samples,
                                  const GaussianMixture& nu, std::span<const double> r_grid) {
  require_lip(lip);
  check_search_inputs(push_samples, r_grid);
  const auto sorted = sorted_copy(push_samples);
  BoundReport best;
  bool first = true;
  for (double r : r_grid) {
    const double a = -0.5 * r;
    const double beta = min_interpolation_mass({lip, fraction_at_most(sorted, a), r});
    BoundReport rep = kl_lower_bound_point(beta, mixture_mass_interval(nu, a, -a));
    rep.witness = BoundWitness{a, r, {}};
    if (first || improves(rep, best)) best = std::move(rep);
    first = false;
  }
  return best;
}

std::vector<double> default_r_grid(double m, std::size_t n) {
  if (!(m > 0.0)) throw DomainError("default_r_grid: m must be positive");
  if (n < 2) throw DomainError("default_r_grid: need at least two points");
  const double lo = 0.1;
  const double hi = std::max(4.0 * m, lo * 2.0);
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) {
    grid[i] = lo + (hi - lo) * (static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return grid;
}

}  // namespace pflab
