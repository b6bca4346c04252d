#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "oracle.hpp"
#include "pflab/estimators.hpp"
#include "pflab/genmodels.hpp"
#include "pflab/rng.hpp"

using namespace pflab;
using nn::Activation;
using nn::SkipKind;

namespace {

nn::Network scalar_map(double w, Activation act, bool activate_output) {
  nn::MlpOptions opt;
  opt.activate_output = activate_output;
  auto net = nn::build_mlp({1, 1}, act, SkipKind::none, 1, opt);
  net.layers[0].weight(0, 0) = w;
  net.layers[0].bias(0, 0) = 0.0;
  return net;
}

std::vector<double> normal_samples(std::size_t n, double mean, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs(n);
  for (auto& x : xs) x = mean + rng.normal();
  return xs;
}

// Histogram whose counts are the exact bin masses of nu scaled by `n`.
EmpiricalHistogram exact_histogram(const GaussianMixture& nu, double lo, double hi, std::size_t bins, double n) {
  EmpiricalHistogram h = build_histogram(std::vector<double>{lo}, lo, hi, bins);
  h.counts.assign(bins, 0);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < bins; ++i) {
    h.counts[i] = static_cast<std::uint64_t>(std::llround(n * mixture_mass_interval(nu, h.edges[i], h.edges[i + 1])));
    total += h.counts[i];
  }
  const double outside = mixture_mass_interval(nu, -INFINITY, lo) + mixture_mass_interval(nu, hi, INFINITY);
  h.out_of_range = static_cast<std::uint64_t>(std::llround(n * outside));
  h.n = total + h.out_of_range;
  return h;
}

}  // namespace

// ---------------------------------------------------------------- Lipschitz

TEST(Lipschitz, AffineMapIsExact) {
  const auto est = empirical_lipschitz(scalar_map(7.0, Activation::identity, false), -5, 5, 1001);
  EXPECT_DOUBLE_EQ(est.empirical_lower, 7.0);
  EXPECT_DOUBLE_EQ(est.certified_upper, 7.0);
  EXPECT_EQ(est.grid_points, 1001u);
}

TEST(Lipschitz, LeakyReluHasUnitConstant) {
  const auto est = empirical_lipschitz(scalar_map(1.0, Activation::leaky_relu, true), -5, 5, 1000);
  EXPECT_DOUBLE_EQ(est.empirical_lower, 1.0);
  EXPECT_DOUBLE_EQ(est.certified_upper, 1.0);
}

TEST(Lipschitz, GridRefinementIsMonotone) {
  // Interval counts double so every coarse grid point stays on the finer grid.
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const auto net = nn::build_mlp({1, 16, 16, 1}, Activation::silu, SkipKind::none, seed);
    double prev = 0.0;
    for (std::size_t k = 2; k <= 14; ++k) {
      const auto est = empirical_lipschitz(net, -5, 5, (std::size_t{1} << k) + 1);
      EXPECT_GE(est.empirical_lower, prev) << "seed " << seed << " k " << k;
      prev = est.empirical_lower;
    }
  }
}

TEST(Lipschitz, EmpiricalNeverExceedsCertified) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto skip = static_cast<SkipKind>(seed % 3);
    const std::vector<int> shape = skip == SkipKind::residual ? std::vector<int>{1, 8, 8, 8, 1}
                                                              : std::vector<int>{1, 8, 12, 5, 1};
    const auto act = seed % 2 ? Activation::silu : Activation::leaky_relu;
    const auto net = nn::build_mlp(shape, act, skip, seed);
    const auto est = empirical_lipschitz(net, -5, 5, 2001);
    EXPECT_LE(est.empirical_lower, est.certified_upper * (1 + 1e-9)) << "seed " << seed;
  }
}

TEST(Lipschitz, RejectsBadGrid) {
  const auto net = scalar_map(1.0, Activation::identity, false);
  EXPECT_ANY_THROW(empirical_lipschitz(net, 1, 1, 10));
  EXPECT_ANY_THROW(empirical_lipschitz(net, -1, 1, 1));
}

TEST(Lipschitz, GridPointHitsEnds) {
  EXPECT_EQ(grid_point(-5, 5, 0, 11), -5.0);
  EXPECT_EQ(grid_point(-5, 5, 10, 11), 5.0);
  EXPECT_DOUBLE_EQ(grid_point(-5, 5, 5, 11), 0.0);
}

// ---------------------------------------------------------------- histogram

TEST(Histogram, AllSamplesAtLowEdgeFillFirstBin) {
  const std::vector<double> xs(37, -2.0);
  const auto h = build_histogram(xs, -2.0, 3.0, 10);
  EXPECT_EQ(h.counts[0], 37u);
  EXPECT_EQ(h.out_of_range, 0u);
}

TEST(Histogram, UniformGridGivesNearEqualCounts) {
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) xs.push_back((i + 0.5) / 10000.0);
  const auto h = build_histogram(xs, 0.0, 1.0, 50);
  for (auto c : h.counts) EXPECT_NEAR(static_cast<double>(c), 200.0, 1.0);
}

TEST(Histogram, SampleAtHighEdgeGoesToLastBin) {
  const auto h = build_histogram(std::vector<double>{1.0, 0.5}, 0.0, 1.0, 4);
  EXPECT_EQ(h.counts[3], 1u);
  EXPECT_EQ(h.counts[2], 1u);
  EXPECT_EQ(h.out_of_range, 0u);
}

TEST(Histogram, CountsBalanceAndEdgesIncrease) {
  std::vector<double> xs = normal_samples(5000, 0.0, 9);
  xs.push_back(std::numeric_limits<double>::quiet_NaN());
  xs.push_back(100.0);
  const auto h = build_histogram(xs, -2.0, 2.0, 40);
  std::uint64_t sum = h.out_of_range;
  for (auto c : h.counts) sum += c;
  EXPECT_EQ(sum, h.n);
  EXPECT_EQ(h.n, xs.size());
  EXPECT_GE(h.out_of_range, 2u);
  ASSERT_EQ(h.edges.size(), 41u);
  for (std::size_t i = 1; i < h.edges.size(); ++i) EXPECT_LT(h.edges[i - 1], h.edges[i]);
  EXPECT_EQ(h.edges.front(), -2.0);
  EXPECT_EQ(h.edges.back(), 2.0);
}

TEST(Histogram, DefaultRangePadsSampleExtremes) {
  const auto h = build_histogram(std::vector<double>{0.0, 3.0});
  EXPECT_EQ(h.bins(), 200u);
  EXPECT_DOUBLE_EQ(h.edges.front(), -1.0);
  EXPECT_DOUBLE_EQ(h.edges.back(), 4.0);
}

TEST(Histogram, RejectsBadArguments) {
  const std::vector<double> xs{0.0};
  EXPECT_ANY_THROW(build_histogram(xs, 0.0, 1.0, 0));
  EXPECT_ANY_THROW(build_histogram(xs, 1.0, 1.0, 3));
}

// ---------------------------------------------------------------- TV

TEST(EmpiricalTv, SamplesOfTargetAreClose) {
  for (double m : {2.0, 10.0}) {
    const auto nu = GaussianMixture::balanced(m);
    const auto xs = gen::sample_dataset(nu, 1000000, 17);
    const double tv = empirical_tv(build_histogram(xs, 200), nu);
    EXPECT_LE(tv, 0.02) << "m " << m;
    EXPECT_GE(tv, 0.0);
  }
}

TEST(EmpiricalTv, DisjointMassIsNearOne) {
  const std::vector<double> xs(1000, -50.0);
  const double tv = empirical_tv(build_histogram(xs, -50.0, -40.0, 20), GaussianMixture::balanced(10));
  EXPECT_GE(tv, 0.99);
  EXPECT_LE(tv, 1.0);
}

TEST(EmpiricalTv, ExactMassesGiveZero) {
  const auto nu = GaussianMixture::balanced(3);
  const auto h = exact_histogram(nu, -8, 8, 200, 1e15);
  EXPECT_LT(empirical_tv(h, nu), 1e-9);
}

TEST(EmpiricalTv, PermutationInvariant) {
  const auto nu = GaussianMixture::balanced(2);
  auto xs = gen::sample_dataset(nu, 20000, 5);
  const double a = empirical_tv(build_histogram(xs, -8, 8, 100), nu);
  std::reverse(xs.begin(), xs.end());
  std::rotate(xs.begin(), xs.begin() + 777, xs.end());
  EXPECT_EQ(a, empirical_tv(build_histogram(xs, -8, 8, 100), nu));
}

// ---------------------------------------------------------------- KL

TEST(EmpiricalKl, ExactMassesGiveZero) {
  const auto nu = GaussianMixture::single(0.0, 1.0);
  const auto h = exact_histogram(nu, -6, 6, 120, 1e15);
  const auto kl = empirical_kl(h, nu);
  EXPECT_FALSE(kl.infinite_bin.has_value());
  EXPECT_NEAR(kl.value, 0.0, 1e-12);
}

TEST(EmpiricalKl, ShiftedGaussianMatchesAnalyticValue) {
  const auto xs = normal_samples(1000000, 0.0, 23);
  const auto kl = empirical_kl(build_histogram(xs, -8, 9, 200), GaussianMixture::single(1.0, 1.0));
  EXPECT_NEAR(kl.value, 0.5, 0.1);
}

TEST(EmpiricalKl, SingleBinFormula) {
  const auto nu = GaussianMixture::single(0.0, 1.0);
  const std::vector<double> xs(500, 0.6);
  const auto h = build_histogram(xs, 0.0, 1.0, 4);
  ASSERT_EQ(h.counts[2], 500u);
  const double q = oracle::balanced_mass(0.0, 1.0, 0.5, 0.75).convert_to<double>();
  EXPECT_NEAR(empirical_kl(h, nu).value, std::log(1.0 / q), 1e-12);
}

TEST(EmpiricalKl, UnderflowIsReported) {
  const std::vector<double> xs(10, 1000.0);
  const auto h = build_histogram(xs, 999.0, 1001.0, 8);
  const auto kl = empirical_kl(h, GaussianMixture::single(0.0, 1.0));
  EXPECT_TRUE(std::isinf(kl.value));
  ASSERT_TRUE(kl.infinite_bin.has_value());
  EXPECT_EQ(*kl.infinite_bin, 4u);
}

TEST(EmpiricalKl, PermutationInvariantAndNonnegative) {
  const auto nu = GaussianMixture::balanced(2);
  auto xs = gen::sample_dataset(nu, 20000, 6);
  const auto a = empirical_kl(build_histogram(xs, -8, 8, 100), nu);
  std::reverse(xs.begin(), xs.end());
  const auto b = empirical_kl(build_histogram(xs, -8, 8, 100), nu);
  EXPECT_EQ(a.value, b.value);
  EXPECT_GE(a.value, 0.0);
}

// ---------------------------------------------------------------- masses

TEST(IntervalMass, Extremes) {
  const std::vector<double> xs{-1.0, 0.0, 1.0};
  EXPECT_EQ(interval_mass(xs, -1.0, 1.0), 1.0);
  EXPECT_EQ(interval_mass(xs, 2.0, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(interval_mass(xs, 0.0, 0.0), 1.0 / 3.0);
}

TEST(IntervalMass, BalancedWideSeparation) {
  const auto xs = gen::sample_dataset(GaussianMixture::balanced(10), 1000000, 31);
  EXPECT_LE(interval_mass(xs, -5, 5), 1e-4);
}

TEST(IntervalMass, RejectsReversedInterval) {
  EXPECT_ANY_THROW(interval_mass(std::vector<double>{0.0}, 1.0, 0.0));
}

TEST(ModeProportion, Symmetric) {
  const std::vector<double> xs{-3, -2, -1, 1, 2, 3};
  EXPECT_DOUBLE_EQ(mode_proportion(xs, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(mode_proportion(xs, 10.0), 1.0);
  EXPECT_DOUBLE_EQ(mode_proportion(xs, -1.0), 0.5);
}

TEST(ModeProportion, BalancedSamples) {
  const auto xs = gen::sample_dataset(GaussianMixture::balanced(10), 20000, 77);
  EXPECT_NEAR(mode_proportion(xs, 0.0), 0.5, 0.011);
}

TEST(ModeProportion, RejectsEmpty) { EXPECT_ANY_THROW(mode_proportion(std::vector<double>{}, 0.0)); }
