#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "pflab/errors.hpp"
#include "pflab/estimators.hpp"
#include "pflab/genmodels.hpp"
#include "pflab/network.hpp"

using namespace pflab;
using namespace pflab::nn;

namespace {

Network affine(double w, double b) {
  Network net = build_mlp({1, 1}, Activation::identity, SkipKind::none, 1);
  net.layers[0].weight(0, 0) = w;
  net.layers[0].bias(0, 0) = b;
  return net;
}

Network leaky_identity() {
  MlpOptions opt;
  opt.activate_output = true;
  Network net = build_mlp({1, 1}, Activation::leaky_relu, SkipKind::none, 1, opt);
  net.layers[0].weight(0, 0) = 1.0;
  net.layers[0].bias(0, 0) = 0.0;
  return net;
}

}  // namespace

TEST(BuildMlp, ParameterCounts) {
  EXPECT_EQ(build_mlp({1, 128, 256, 1}, Activation::leaky_relu, SkipKind::none, 0).parameter_count(), 33537u);
  EXPECT_EQ(build_mlp({1, 1}, Activation::identity, SkipKind::none, 0).parameter_count(), 2u);
  const auto sgm = gen::make_sgm(0, gen::SigmaSchedule::geometric(10.0, 0.01, 10));
  EXPECT_EQ(sgm.score_net.parameter_count(), 34665u);
}

TEST(BuildMlp, ResidualBackboneHasTwoSkipPairs) {
  const Network net = build_mlp({1, 256, 256, 256, 1}, Activation::leaky_relu, SkipKind::residual, 0);
  int skips = 0;
  for (std::size_t j = 0; j < net.layer_count(); ++j) skips += net.has_skip_into(j);
  EXPECT_EQ(skips, 2);
  EXPECT_THROW(build_mlp({1, 128, 256, 1}, Activation::leaky_relu, SkipKind::residual, 0), ConfigError);
  const Network dense = build_mlp({1, 16, 8, 4, 1}, Activation::leaky_relu, SkipKind::dense_concat, 0);
  EXPECT_EQ(dense.layer_input_width(1), 32);
  EXPECT_EQ(dense.layer_input_width(2), 16);
  EXPECT_EQ(dense.layer_input_width(3), 4);
}

TEST(BuildMlp, DeterministicInSeed) {
  const auto a = build_mlp({1, 8, 8, 1}, Activation::silu, SkipKind::none, 42);
  const auto b = build_mlp({1, 8, 8, 1}, Activation::silu, SkipKind::none, 42);
  const auto c = build_mlp({1, 8, 8, 1}, Activation::silu, SkipKind::none, 43);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  for (const auto& l : a.layers) EXPECT_EQ(l.bias.norm(), 0.0);
}

TEST(Forward, LeakyReluSlope) {
  const Matrix y = evaluate(leaky_identity(), Matrix::Constant(1, 1, -1.0));
  EXPECT_DOUBLE_EQ(y(0, 0), -0.2);
}

TEST(Forward, ZeroWeightsGiveFinalBias) {
  Network net = build_mlp({1, 5, 3, 1}, Activation::leaky_relu, SkipKind::none, 2);
  for (auto& l : net.layers) l.weight.setZero();
  net.layers.back().bias(0, 0) = 0.75;
  const Matrix y = evaluate(net, Matrix::Constant(4, 1, 3.0));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(y(i, 0), 0.75);
}

TEST(Backward, AffineAndSquaredResidual) {
  auto pass = forward(affine(2.5, -1.0), Matrix::Constant(1, 1, 0.4));
  const auto g = backward(pass, Matrix::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.input(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(g.params[0](0, 0), 0.4);
  EXPECT_DOUBLE_EQ(g.params[1](0, 0), 1.0);

  const double x = 0.4, y = 2.0, w = 2.5, b = -1.0;
  auto pass2 = forward(affine(w, b), Matrix::Constant(1, 1, x));
  const double residual = pass2.output.value()(0, 0) - y;
  const auto g2 = backward(pass2, Matrix::Constant(1, 1, residual));
  EXPECT_NEAR(g2.params[0](0, 0), (w * x + b - y) * x, 1e-15);
}

TEST(Backward, ThreeLayerNetDirectionalDerivatives) {
  Network net = build_mlp({1, 6, 5, 1}, Activation::silu, SkipKind::none, 11);
  Rng rng(12);
  const Matrix x = Matrix::Constant(3, 1, 0.3);
  auto pass = forward(net, x);
  const auto g = backward(pass, Matrix::Ones(3, 1));
  auto params = net.parameters();
  for (int dir = 0; dir < 64; ++dir) {
    std::vector<Matrix> delta;
    double analytic = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix dk(params[k].value->rows(), params[k].value->cols());
      for (Eigen::Index i = 0; i < dk.size(); ++i) dk.data()[i] = rng.normal();
      analytic += (dk.array() * g.params[k].array()).sum();
      delta.push_back(dk);
    }
    const double h = 1e-6;
    Network plus = net, minus = net;
    auto pp = plus.parameters(), pm = minus.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      *pp[k].value += h * delta[k];
      *pm[k].value -= h * delta[k];
    }
    const double fd = (evaluate(plus, x).sum() - evaluate(minus, x).sum()) / (2 * h);
    EXPECT_NEAR(analytic, fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Backward, RandomNetworksAllSkipKinds) {
  for (std::uint64_t s = 0; s < 12; ++s) {
    for (auto skip : {SkipKind::none, SkipKind::residual, SkipKind::dense_concat}) {
      const auto r = testsupport::check_network_gradients(testsupport::random_network(s, skip, s % 3 == 0), s);
      EXPECT_LE(r.max_rel_error, 1e-5) << "seed " << s << " skip " << to_string(skip);
    }
  }
}

TEST(InputJacobian, SimpleMaps) {
  const Matrix z = Vector::LinSpaced(7, -3.0, 3.0);
  const Matrix j = input_jacobian(affine(-4.0, 2.0), z);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(j(i, 0), -4.0);
  Matrix pts(2, 1);
  pts << 1.0, -1.0;
  const Matrix jl = input_jacobian(leaky_identity(), pts);
  EXPECT_DOUBLE_EQ(jl(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(jl(1, 0), 0.2);
}

TEST(InputJacobian, MatchesCentralDifference) {
  const Network net = build_mlp({1, 16, 16, 1}, Activation::silu, SkipKind::dense_concat, 5);
  const Matrix z = Vector::LinSpaced(41, -4.0, 4.0);
  const Matrix j = input_jacobian(net, z);
  const double h = 1e-6;
  const Matrix fd = (evaluate(net, z.array() + h) - evaluate(net, z.array() - h)) / (2 * h);
  for (int i = 0; i < 41; ++i) EXPECT_LE(std::abs(j(i, 0) - fd(i, 0)) / std::max(1e-3, std::abs(fd(i, 0))), 1e-5);
}

TEST(Spectral, DiagonalMatrix) {
  Network net = build_mlp({2, 2}, Activation::identity, SkipKind::none, 1);
  net.layers[0].weight << 3.0, 0.0, 0.0, 1.0;
  auto state = init_spectral_state(net, 9);
  const Network sn = spectral_normalize(net, 50, state);
  EXPECT_NEAR(state.sigma[0], 3.0, 1e-9);
  EXPECT_NEAR(sn.layers[0].weight(0, 0), 1.0, 1e-9);
  EXPECT_NEAR(sn.layers[0].weight(1, 1), 1.0 / 3.0, 1e-9);
}

TEST(Spectral, OrthogonalMatrixIsUnchanged) {
  Network net = build_mlp({2, 2}, Activation::identity, SkipKind::none, 1);
  const double c = std::cos(0.3), s = std::sin(0.3);
  net.layers[0].weight << c, -s, s, c;
  auto state = init_spectral_state(net, 9);
  const Network sn = spectral_normalize(net, 20, state);
  EXPECT_NEAR((sn.layers[0].weight - net.layers[0].weight).norm(), 0.0, 1e-9);
}

TEST(Spectral, PowerIteration50ItersWithin1e3OnRandomMatrices) {
  Rng rng(21);
  int within = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    Network net = build_mlp({256, 128}, Activation::identity, SkipKind::none, 1);
    Matrix& w = net.layers[0].weight;
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    auto state = init_spectral_state(net, rng.next());
    power_iterate(net, state, 50);
    const double exact = spectral_norm(w);
    const double err = std::abs(state.sigma[0] - exact) / exact;
    within += err <= 1e-3;
    EXPECT_LE(err, 1e-3) << "trial " << trial;
  }
  RecordProperty("within_tolerance", within);
}

// Warm-started iteration, one step per call as in training.
TEST(Spectral, PowerIterationConvergesAcrossSteps) {
  Rng rng(22);
  Network net = build_mlp({256, 128}, Activation::identity, SkipKind::none, 1);
  Matrix& w = net.layers[0].weight;
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  auto state = init_spectral_state(net, 3);
  const double exact = spectral_norm(w);
  double err_early = 0.0;
  for (int step = 1; step <= 2000; ++step) {
    power_iterate(net, state, 1);
    if (step == 10) err_early = std::abs(state.sigma[0] - exact) / exact;
  }
  const double err = std::abs(state.sigma[0] - exact) / exact;
  EXPECT_LT(err, err_early);
  EXPECT_LE(err, 1e-6);
  EXPECT_LE(state.sigma[0], exact * (1 + 1e-12));
}

TEST(Spectral, NormalizedNetworkCertifiedBound) {
  const Network net = build_mlp({1, 128, 256, 1}, Activation::leaky_relu, SkipKind::none, 4);
  auto state = init_spectral_state(net, 5);
  const Network sn = spectral_normalize(net, 50, state);
  EXPECT_LE(certified_lipschitz(sn), 1.01);
  EXPECT_GT(certified_lipschitz(net), 1.01);
}

TEST(Spectral, ExactNormAgreesWithSvd) {
  Rng rng(30);
  Matrix m(7, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  Eigen::JacobiSVD<Matrix> svd(m);
  EXPECT_NEAR(spectral_norm(m), svd.singularValues()(0), 1e-12);
  EXPECT_NEAR(spectral_norm(m.transpose()), svd.singularValues()(0), 1e-12);
}

TEST(Certified, BoundsEmpiricalForAllSkipKinds) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (auto skip : {SkipKind::none, SkipKind::residual, SkipKind::dense_concat}) {
      const Network net = testsupport::random_network(100 + s, skip, false);
      const auto est = empirical_lipschitz(net, -5.0, 5.0, 20001);
      EXPECT_LE(est.empirical_lower, est.certified_upper * (1 + 1e-9)) << s << " " << to_string(skip);
    }
  }
}

TEST(NoiseEmbedding, DeterministicAndDistinct) {
  const auto sgm = gen::make_sgm(3, gen::SigmaSchedule::geometric(10.0, 0.01, 10));
  const Vector a = noise_embed(sgm.score_net, 0.5);
  const Vector b = noise_embed(sgm.score_net, 0.5);
  EXPECT_EQ((a - b).norm(), 0.0);
  std::vector<Vector> enc;
  for (double s : sgm.schedule.sigmas) enc.push_back(positional_encoding(s, 16));
  for (std::size_t i = 0; i < enc.size(); ++i) {
    for (std::size_t j = i + 1; j < enc.size(); ++j) EXPECT_GT((enc[i] - enc[j]).norm(), 1e-6);
  }
  EXPECT_THROW(positional_encoding(0.0, 16), DomainError);
}

TEST(Serialization, RoundTrip) {
  MlpOptions opt;
  NoiseEmbedding emb;
  opt.conditioning = emb;
  const Network net = build_mlp({1, 96, 196, 1}, Activation::silu, SkipKind::none, 8, opt);
  std::stringstream ss;
  save_network(ss, net);
  const Network back = load_network(ss);
  EXPECT_TRUE(net == back);
  std::stringstream bad("not a network");
  EXPECT_THROW(load_network(bad), ConfigError);
}

TEST(Parsing, Tags) {
  EXPECT_EQ(parse_skip_kind("resnet"), SkipKind::residual);
  EXPECT_EQ(parse_skip_kind("densenet"), SkipKind::dense_concat);
  EXPECT_EQ(parse_activation("silu"), Activation::silu);
  EXPECT_THROW(parse_skip_kind("unet"), ConfigError);
}
