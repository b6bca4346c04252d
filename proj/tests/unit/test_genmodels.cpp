#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "pflab/adam.hpp"
#include "pflab/errors.hpp"
#include "pflab/genmodels.hpp"
#include "pflab/rng.hpp"

using namespace pflab;
using namespace pflab::gen;
using nn::Activation;
using nn::SkipKind;

namespace {

Network scalar_affine(double w, double b, Activation act = Activation::identity, bool activate_output = false,
                      double slope = 0.2) {
  nn::MlpOptions opt;
  opt.activate_output = activate_output;
  opt.slope = slope;
  auto net = nn::build_mlp({1, 1}, act, SkipKind::none, 1, opt);
  net.layers[0].weight(0, 0) = w;
  net.layers[0].bias(0, 0) = b;
  return net;
}

void set_discriminator(GanModel& m, Network d) {
  m.discriminator = std::move(d);
  m.disc_sn = nn::init_spectral_state(m.discriminator, 11);
  nn::power_iterate(m.discriminator, m.disc_sn, 50);
}

Matrix normals(std::size_t n, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
  Rng rng(seed);
  Matrix m(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = mean + sd * rng.normal();
  return m;
}

// Noise-conditioned 1->1 network that ignores the embedding: s(y) = w y + b.
Network conditioned_affine(double w, double b) {
  nn::MlpOptions opt;
  opt.conditioning = nn::NoiseEmbedding{};
  auto net = nn::build_mlp({1, 1}, Activation::leaky_relu, SkipKind::none, 2, opt);
  net.layers[0].weight.setZero();
  net.layers[0].weight(0, 0) = w;
  net.layers[0].bias(0, 0) = b;
  return net;
}

double mean_of(const Vector& v) { return v.mean(); }
double var_of(const Vector& v) { return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1); }

}  // namespace

// ---------------------------------------------------------------- data

TEST(SampleDataset, BalancedLeftFraction) {
  const auto xs = sample_dataset(GaussianMixture::balanced(10), 50000, 1);
  ASSERT_EQ(xs.size(), 50000u);
  std::size_t left = 0;
  for (double x : xs) left += x < 0.0;
  EXPECT_NEAR(static_cast<double>(left) / 50000.0, 0.5, 0.01);
}

TEST(SampleDataset, TinySigmaCollapsesToMean) {
  const auto xs = sample_dataset(GaussianMixture::single(4.25, 1e-12), 1000, 2);
  for (double x : xs) EXPECT_NEAR(x, 4.25, 1e-9);
}

TEST(SampleDataset, Deterministic) {
  const auto nu = GaussianMixture::balanced(3);
  EXPECT_EQ(sample_dataset(nu, 5000, 9), sample_dataset(nu, 5000, 9));
  EXPECT_NE(sample_dataset(nu, 5000, 9), sample_dataset(nu, 5000, 10));
}

// ---------------------------------------------------------------- VAE

TEST(Vae, KlTermExamples) {
  EXPECT_DOUBLE_EQ(vae_kl_term(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(vae_kl_term(1.0, 0.0), 0.5);
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) EXPECT_GE(vae_kl_term(3 * rng.normal(), 3 * rng.normal()), 0.0);
}

TEST(Vae, PerfectReconstructionLeavesConstant) {
  const double c = 0.1;
  EXPECT_DOUBLE_EQ(vae_reconstruction_penalty(1.7, 1.7, c), 0.5 * std::log(2 * std::numbers::pi * c * c));
  EXPECT_DOUBLE_EQ(vae_reconstruction_penalty(1.0, 0.0, 1.0), 0.5 + 0.5 * std::log(2 * std::numbers::pi));
}

TEST(Vae, ElboMatchesReparametrizedExpectation) {
  // Constant heads (f1, f2) and an identity decoder make the expected loss
  // ((x - f1)^2 + exp f2) / (2c^2) + log term + KL term.
  const double f1 = 0.7, f2 = -0.4, x = 1.3, c = 0.5;
  VaeModel vae = make_vae(3);
  vae.c = c;
  vae.mean_head.layers.back().weight.setZero();
  vae.mean_head.layers.back().bias.setConstant(f1);
  vae.logvar_head.layers.back().weight.setZero();
  vae.logvar_head.layers.back().bias.setConstant(f2);
  vae.decoder = scalar_affine(1.0, 0.0);
  const std::size_t n = 100000;
  const Matrix xi = normals(n, 5);
  auto loss = vae_elbo_loss(vae, Matrix::Constant(static_cast<Eigen::Index>(n), 1, x), xi);
  const double expected = ((x - f1) * (x - f1) + std::exp(f2)) / (2 * c * c) +
                          0.5 * std::log(2 * std::numbers::pi * c * c) + vae_kl_term(f1, f2);
  // z has mean f1 and variance exp f2; the per-sample loss is quadratic in z.
  const double sd_z = std::exp(f2 / 2);
  const double per_sample_sd = std::sqrt(2 * std::pow(sd_z, 4) + 4 * (x - f1) * (x - f1) * sd_z * sd_z) / (2 * c * c);
  EXPECT_NEAR(loss.value(), expected, 3 * per_sample_sd / std::sqrt(static_cast<double>(n)));
}

TEST(Vae, GradientsCoverAllNetworks) {
  VaeModel vae = make_vae(7, {1, 8, 1});
  auto loss = vae_elbo_loss(vae, normals(16, 1), normals(16, 2));
  ASSERT_EQ(loss.bindings.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) {
    double total = 0.0;
    for (const auto& g : loss.gradients(k)) total += g.squaredNorm();
    EXPECT_GT(total, 0.0) << "binding " << k;
  }
}

// ---------------------------------------------------------------- GAN

TEST(Gan, VanillaEquilibriumValue) {
  GanModel gan = make_gan(GanVariant::vanilla, 1, {1, 1});
  gan.generator = scalar_affine(0.0, 0.0);
  set_discriminator(gan, scalar_affine(1.0, 0.0));
  auto losses = gan_losses(gan, Matrix::Zero(8, 1), normals(8, 3));
  EXPECT_NEAR(losses.discriminator.value(), 2 * std::log(2.0), 1e-14);
  EXPECT_NEAR(losses.generator.value(), -std::log(2.0), 1e-14);
}

TEST(Gan, HingeInactiveAtSeparatedScores) {
  GanModel gan = make_gan(GanVariant::hinge, 1, {1, 1});
  gan.generator = scalar_affine(0.0, -2.0);
  set_discriminator(gan, scalar_affine(1.0, 0.0));
  auto losses = gan_losses(gan, Matrix::Constant(6, 1, 2.0), normals(6, 4));
  EXPECT_DOUBLE_EQ(losses.discriminator.value(), 0.0);
  EXPECT_DOUBLE_EQ(losses.generator.value(), 2.0);
}

TEST(Gan, HingeGeneratorLossIsNegatedMeanScore) {
  GanModel gan = make_gan(GanVariant::hinge, 2, {1, 4, 1});
  const Matrix z = normals(32, 5);
  auto gl = gan_generator_loss(gan, z);
  // Raw discriminator scores with the normalized weights it trains with.
  nn::Graph g;
  auto d = nn::bind(g, gan.discriminator, false, &gan.disc_sn);
  const Matrix scores = nn::apply(d, g.constant(nn::evaluate(gan.generator, z))).value();
  EXPECT_NEAR(gl.value(), -scores.mean(), 1e-12);
}

TEST(Gan, LogFloorKeepsLossFinite) {
  GanModel gan = make_gan(GanVariant::vanilla, 1, {1, 1});
  gan.generator = scalar_affine(0.0, 1e6);
  set_discriminator(gan, scalar_affine(1.0, 0.0));
  auto losses = gan_losses(gan, Matrix::Constant(4, 1, -1e6), normals(4, 6));
  EXPECT_TRUE(std::isfinite(losses.discriminator.value()));
  EXPECT_NEAR(losses.discriminator.value(), -2 * std::log(kLogFloor), 1e-6);
}

TEST(Gan, TrainedDiscriminatorSettlesAtEquilibrium) {
  // Generator frozen at the data law: identity on N(0, 1) latents.
  GanModel gan = make_gan(GanVariant::vanilla, 3, {1, 1});
  gan.generator = scalar_affine(1.0, 0.0);
  set_discriminator(gan, nn::build_mlp({1, 32, 32, 1}, Activation::leaky_relu, SkipKind::none, 8));
  auto state = nn::make_adam_state(gan.discriminator);
  double last = 0.0;
  for (int step = 0; step < 400; ++step) {
    auto loss = gan_discriminator_loss(gan, normals(256, 1000 + step), normals(256, 5000 + step));
    nn::adam_step(gan.discriminator, loss.gradients(0), state);
    nn::power_iterate(gan.discriminator, gan.disc_sn, 1);
  }
  for (int step = 0; step < 20; ++step) {
    last += gan_discriminator_loss(gan, normals(1000, 9000 + step), normals(1000, 9500 + step)).value() / 20;
  }
  EXPECT_NEAR(last, 2 * std::log(2.0), 0.01);
}

TEST(Gan, SnGeneratorEffectiveWeightsAreNormalized) {
  GanModel gan = make_gan(GanVariant::sn_generator, 4, {1, 16, 16, 1});
  nn::power_iterate(gan.generator, gan.gen_sn, 500);
  const auto eff = gan.effective_generator();
  for (const auto& layer : eff.layers) EXPECT_NEAR(nn::spectral_norm(layer.weight), 1.0, 1e-6);
}

TEST(Gan, RejectsNonPositivePenaltyLip) {
  EXPECT_THROW(make_gan(GanVariant::gradient_penalty, 1, {1, 1}, SkipKind::none, 0.0), ConfigError);
}

// ---------------------------------------------------------------- gradient penalty

TEST(GradientPenalty, LinearGeneratorAtTargetSlope) {
  const Matrix z = normals(16, 7);
  for (double L : {0.5, 5.0, 25.0}) {
    EXPECT_NEAR(gradient_penalty(scalar_affine(L, 0.3), z, L).value(), 0.0, 1e-16 + 1e-12 * L) << L;
  }
}

TEST(GradientPenalty, ZeroGeneratorGivesTen) {
  const Matrix z = normals(16, 8);
  for (double L : {1.0, 5.0, 15.0}) EXPECT_NEAR(gradient_penalty(scalar_affine(0.0, 0.0), z, L).value(), 10.0, 1e-12);
}

TEST(GradientPenalty, BatchMaxSelectsLargestDeviation) {
  // Leaky output: slope L+2 for z > 0 and L-1 for z < 0.
  const double L = 5.0;
  const Network g = scalar_affine(L + 2, 0.0, Activation::leaky_relu, true, (L - 1) / (L + 2));
  Matrix z(2, 1);
  z << -1.0, 1.0;
  EXPECT_NEAR(gradient_penalty(g, z, L).value(), 10.0 / (L * L) * 4.0, 1e-9);
  Matrix left(1, 1);
  left << -1.0;
  EXPECT_NEAR(gradient_penalty(g, left, L).value(), 10.0 / (L * L) * 1.0, 1e-9);
}

TEST(GradientPenalty, SquaredFormFlag) {
  const double L = 4.0;
  const Matrix z = normals(8, 9);
  EXPECT_NEAR(gradient_penalty(scalar_affine(2.0, 0.0), z, L, PenaltyForm::squared_norm).value(), 0.0, 1e-10);
  EXPECT_NEAR(gradient_penalty(scalar_affine(L, 0.0), z, L, PenaltyForm::squared_norm).value(),
              10.0 / (L * L) * (L * L - L) * (L * L - L), 1e-8);
}

TEST(GradientPenalty, DifferentiableInGeneratorParameters) {
  const double L = 3.0;
  Network g = scalar_affine(2.0, 0.1);
  const Matrix z = normals(4, 10);
  auto pen = gradient_penalty(g, z, L);
  const auto grads = pen.gradients(0);
  // d/dw (10/L^2)(w - L)^2 at w = 2.
  EXPECT_NEAR(grads[0](0, 0), 10.0 / (L * L) * 2 * (2.0 - L), 1e-6);
  EXPECT_NEAR(grads[1](0, 0), 0.0, 1e-9);
}

// ---------------------------------------------------------------- SGM

TEST(SigmaScheduleTest, GeometricProgression) {
  const auto s = SigmaSchedule::geometric(10.0, 0.01, 10);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_EQ(s.sigmas.back(), 0.01);
  const double ratio = s.sigmas[1] / s.sigmas[0];
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_NEAR(s.sigmas[i] / s.sigmas[i - 1], ratio, 1e-12 * ratio);
  EXPECT_NO_THROW(s.validate());
  EXPECT_THROW((SigmaSchedule{{1.0, 1.0}}.validate()), ConfigError);
  EXPECT_THROW((SigmaSchedule{{}}.validate()), ConfigError);
}

TEST(SigmaScheduleTest, DefaultLargestLevel) {
  EXPECT_EQ(default_sigma_max(20.0), 10.0);
  EXPECT_EQ(default_sigma_max(1.0), 1.0);
}

TEST(Dsm, OracleScoreHasZeroResidual) {
  const double x0 = 1.25, sigma = 0.3;
  SgmModel model = make_sgm(1, SigmaSchedule{{sigma}});
  model.score_net = conditioned_affine(-1.0 / (sigma * sigma), x0 / (sigma * sigma));
  const std::size_t n = 64;
  const std::vector<double> sig(n, sigma);
  auto loss = dsm_loss(model, Matrix::Constant(n, 1, x0), sig, normals(n, 12));
  EXPECT_NEAR(loss.value(), 0.0, 1e-20);
}

TEST(Dsm, ZeroScoreGivesMeanSquaredDraw) {
  SgmModel model = make_sgm(2, SigmaSchedule::geometric(5.0, 0.01, 10));
  model.score_net = conditioned_affine(0.0, 0.0);
  Rng rng(13);
  const std::size_t n = 200000;
  const auto sig = draw_sigmas(model.schedule, n, rng);
  const Matrix xi = normals(n, 14);
  const double loss = dsm_loss(model, normals(n, 15, 2.0, 3.0), sig, xi).value();
  EXPECT_NEAR(loss, xi.squaredNorm() / static_cast<double>(n), 1e-12);
  EXPECT_NEAR(loss, 1.0, 3 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST(Dsm, AnalyticMinimizerGap) {
  const double mu = 1.0, s = 1.5;
  const std::size_t n = 1000000;
  for (double sigma : {0.5, 1.0, 2.0}) {
    SgmModel model = make_sgm(3, SigmaSchedule{{sigma}});
    const std::vector<double> sig(n, sigma);
    const Matrix x = normals(n, 16, mu, s);
    const Matrix xi = normals(n, 17);
    model.score_net = conditioned_affine(0.0, 0.0);
    const double zero = dsm_loss(model, x, sig, xi).value();
    model.score_net = conditioned_affine(-1.0 / (s * s + sigma * sigma), mu / (s * s + sigma * sigma));
    const double best = dsm_loss(model, x, sig, xi).value();
    // E[(sigma s* + xi)^2] = s^2/(s^2 + sigma^2), against 1 for s = 0.
    EXPECT_NEAR(zero - best, sigma * sigma / (s * s + sigma * sigma), 0.01) << "sigma " << sigma;
    EXPECT_NEAR(best, s * s / (s * s + sigma * sigma), 0.01) << "sigma " << sigma;
  }
}

TEST(Langevin, StepSizeNormalization) {
  const auto sched = SigmaSchedule::geometric(1.0, 0.01, 3);
  LangevinConfig cfg;
  EXPECT_DOUBLE_EQ(langevin_step_size(sched, cfg, 2), 2e-5);
  EXPECT_NEAR(langevin_step_size(sched, cfg, 0), 2e-5 * 1e4, 1e-12);
  cfg.normalization = LangevinNormalization::largest_sigma;
  EXPECT_DOUBLE_EQ(langevin_step_size(sched, cfg, 0), 2e-5);
}

TEST(Langevin, ZeroScoreIsGaussianRandomWalk) {
  const auto sched = SigmaSchedule::geometric(1.0, 0.01, 4);
  LangevinConfig cfg;
  cfg.steps_per_level = 25;
  const ScoreFn zero = [](const Vector& y, double, Vector& out) { out = Vector::Zero(y.size()); };
  const std::size_t n = 100000;
  const auto tape = make_noise_tape(n, sched.size(), cfg.steps_per_level, 21);
  const Vector out = langevin_sample(zero, sched, cfg, tape);
  Vector expect = tape.x0;
  double total_var = 0.0;
  for (std::size_t level = 0; level < sched.size(); ++level) {
    const double a = langevin_step_size(sched, cfg, level);
    total_var += a * static_cast<double>(cfg.steps_per_level);
    for (std::size_t t = 0; t < cfg.steps_per_level; ++t) {
      expect += std::sqrt(a) * tape.z.row(static_cast<Eigen::Index>(level * cfg.steps_per_level + t)).transpose();
    }
  }
  EXPECT_LT((out - expect).cwiseAbs().maxCoeff(), 1e-12);
  const Vector walk = out - tape.x0;
  EXPECT_NEAR(var_of(walk), total_var, 3 * total_var * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST(Langevin, SeedAndTapeAgree) {
  const auto sched = SigmaSchedule::geometric(2.0, 0.01, 5);
  LangevinConfig cfg;
  cfg.steps_per_level = 10;
  const ScoreFn score = [](const Vector& y, double s, Vector& out) { out = -(y.array() - 1.0) / (1.0 + s * s); };
  const auto a = langevin_sample(score, sched, cfg, 500, 33);
  const auto b = langevin_sample(score, sched, cfg, make_noise_tape(500, sched.size(), cfg.steps_per_level, 33));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, langevin_sample(score, sched, cfg, 500, 33));
}

TEST(Langevin, AnalyticGaussianScore) {
  const auto sched = SigmaSchedule::geometric(1.0, 0.01, 10);
  const ScoreFn score = [](const Vector& y, double s, Vector& out) { out = -(y.array() - 3.0) / (1.0 + s * s); };
  LangevinConfig cfg;
  const std::size_t n = 10000;
  const Vector x = langevin_sample(score, sched, cfg, n, 41);
  EXPECT_NEAR(mean_of(x), 3.0, 0.05);
  EXPECT_NEAR(var_of(x), 1.0, 0.1);
  // Burn-in sufficiency: doubling the steps moves the mean by less than the
  // 95% interval of a difference of two independent means.
  cfg.steps_per_level = 200;
  const Vector x2 = langevin_sample(score, sched, cfg, n, 42);
  const double ci = 1.96 * std::sqrt(var_of(x) / n + var_of(x2) / n);
  EXPECT_LT(std::abs(mean_of(x) - mean_of(x2)), ci);
}

TEST(Langevin, NonFiniteStateReportsLevel) {
  const auto sched = SigmaSchedule::geometric(1.0, 0.01, 3);
  const ScoreFn bad = [](const Vector& y, double s, Vector& out) {
    out = Vector::Constant(y.size(), s < 0.5 ? std::nan("") : 0.0);
  };
  try {
    langevin_sample(bad, sched, LangevinConfig{}, 4, 1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("level"), std::string::npos);
  }
}

// ---------------------------------------------------------------- training

namespace {

TrainConfig tiny_config(ModelKind kind) {
  TrainConfig cfg;
  cfg.kind = kind;
  cfg.epochs = 1;
  cfg.batch_size = 100;
  cfg.shape = {1, 8, 1};
  cfg.separation = 4.0;
  cfg.metrics_lip_grid = 101;
  cfg.metrics_samples = 200;
  cfg.langevin.steps_per_level = 5;
  cfg.sgm_levels = 3;
  return cfg;
}

}  // namespace

TEST(Train, OneEpochGivesOneMetricsRow) {
  const auto data = sample_dataset(GaussianMixture::balanced(2), 500, 1);
  for (auto kind : {ModelKind::vae, ModelKind::gan, ModelKind::sgm}) {
    const auto rec = train(data, tiny_config(kind));
    EXPECT_EQ(rec.status, RunStatus::ok) << rec.message;
    ASSERT_EQ(rec.metrics.size(), 1u);
    EXPECT_EQ(rec.metrics[0].epoch, 1u);
    EXPECT_TRUE(std::isfinite(rec.metrics[0].loss));
    EXPECT_EQ(rec.model.kind, kind);
  }
}

TEST(Train, RejectsInvalidConfig) {
  const auto data = sample_dataset(GaussianMixture::balanced(2), 500, 1);
  auto cfg = tiny_config(ModelKind::vae);
  cfg.epochs = 0;
  EXPECT_THROW(train(data, cfg), ConfigError);
  cfg = tiny_config(ModelKind::vae);
  cfg.batch_size = 501;
  EXPECT_THROW(train(data, cfg), ConfigError);
}

TEST(Train, DeterministicGivenSeed) {
  const auto data = sample_dataset(GaussianMixture::balanced(2), 500, 1);
  auto cfg = tiny_config(ModelKind::gan);
  cfg.epochs = 2;
  cfg.seed = 5;
  const auto a = train(data, cfg);
  const auto b = train(data, cfg);
  ASSERT_EQ(a.metrics.size(), b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    EXPECT_EQ(a.metrics[i].loss, b.metrics[i].loss);
    EXPECT_EQ(a.metrics[i].lip_empirical, b.metrics[i].lip_empirical);
  }
  EXPECT_EQ(generate(a.model, 100, 3), generate(b.model, 100, 3));
}

TEST(Train, SnGeneratorStaysCertifiedBelowOne) {
  const auto data = sample_dataset(GaussianMixture::balanced(4), 1000, 2);
  auto cfg = tiny_config(ModelKind::gan);
  cfg.variant = GanVariant::sn_generator;
  cfg.shape = {1, 16, 16, 1};
  cfg.epochs = 5;
  const auto rec = train(data, cfg);
  ASSERT_EQ(rec.metrics.size(), 5u);
  for (const auto& m : rec.metrics) EXPECT_LE(m.lip_certified, 1.01) << "epoch " << m.epoch;
}

TEST(Train, MetricsAreMonotoneInEpoch) {
  const auto data = sample_dataset(GaussianMixture::balanced(2), 500, 3);
  auto cfg = tiny_config(ModelKind::vae);
  cfg.epochs = 3;
  const auto rec = train(data, cfg);
  ASSERT_EQ(rec.metrics.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(rec.metrics[i].epoch, i + 1);
}

TEST(Train, DivergenceIsFlaggedNotThrown) {
  const auto data = sample_dataset(GaussianMixture::balanced(2), 500, 4);
  auto cfg = tiny_config(ModelKind::vae);
  cfg.epochs = 20;
  cfg.lr = 1e6;
  cfg.vae_c = 1e-150;
  const auto rec = train(data, cfg);
  EXPECT_EQ(rec.status, RunStatus::diverged);
  EXPECT_FALSE(rec.message.empty());
  EXPECT_LT(rec.metrics.size(), 20u);
}

TEST(Train, PushforwardOfScoreModelThrows) {
  const auto data = sample_dataset(GaussianMixture::balanced(2), 500, 1);
  const auto rec = train(data, tiny_config(ModelKind::sgm));
  EXPECT_THROW(rec.model.pushforward(), UsageError);
  EXPECT_EQ(generate(rec.model, 50, 1).size(), 50u);
}
