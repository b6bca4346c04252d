#pragma once

// Univariate generative models: a VAE, a GAN with four training variants and
// a noise-conditioned score model sampled by annealed Langevin dynamics.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pflab/adam.hpp"
#include "pflab/estimators.hpp"
#include "pflab/gauss.hpp"
#include "pflab/network.hpp"
#include "pflab/rng.hpp"

namespace pflab::gen {

using nn::Graph;
using nn::Matrix;
using nn::Network;
using nn::Var;
using nn::Vector;

enum class ModelKind { vae, gan, sgm };
enum class GanVariant { vanilla, hinge, sn_generator, gradient_penalty };
enum class PenaltyForm { norm, squared_norm };
enum class LangevinNormalization { smallest_sigma, largest_sigma };

std::string to_string(ModelKind k);
std::string to_string(GanVariant v);
std::string to_string(PenaltyForm f);
std::string to_string(LangevinNormalization n);
ModelKind parse_model_kind(const std::string& s);
GanVariant parse_gan_variant(const std::string& s);
PenaltyForm parse_penalty_form(const std::string& s);
LangevinNormalization parse_langevin_normalization(const std::string& s);

/// i.i.d. draws from nu: component by weight, then Gaussian.
std::vector<double> sample_dataset(const GaussianMixture& nu, std::size_t n, std::uint64_t seed);

/// A loss recorded on its own graph together with the bindings of the
/// networks whose parameters it depends on.
struct ModelLoss {
  std::unique_ptr<Graph> graph;
  Var loss;
  std::vector<nn::NetworkBinding> bindings;
  bool swept = false;

  double value() const { return loss.value()(0, 0); }
  /// Runs the reverse sweep and returns the gradients of binding k.
  std::vector<Matrix> gradients(std::size_t k);
};

// ---------------------------------------------------------------- VAE

struct VaeModel {
  Network encoder;      // trunk, activated output
  Network mean_head;    // f1
  Network logvar_head;  // f2
  Network decoder;
  double c = 0.1;

  void validate() const;
};

VaeModel make_vae(std::uint64_t seed, std::vector<int> decoder_shape = {1, 128, 256, 1},
                  nn::SkipKind decoder_skip = nn::SkipKind::none, double c = 0.1);

/// KL(N(f1, exp f2) || N(0, 1)).
double vae_kl_term(double f1, double f2);
/// -log N(x; gx, c^2).
double vae_reconstruction_penalty(double x, double gx, double c);

/// Negative ELBO averaged over the batch. Bindings: encoder, mean head,
/// log-variance head, decoder. `noise` holds one standard normal per row.
ModelLoss vae_elbo_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise);

// ---------------------------------------------------------------- GAN

struct GanModel {
  Network generator;
  Network discriminator;
  GanVariant variant = GanVariant::vanilla;
  double penalty_lip = 1.0;  // L of the gradient penalty
  PenaltyForm penalty_form = PenaltyForm::norm;
  double fd_step = 1e-3;
  bool non_saturating = false;
  nn::SpectralNormState disc_sn;
  nn::SpectralNormState gen_sn;  // used by sn_generator only

  void validate() const;
  /// The map actually used to generate samples: for sn_generator the weights
  /// are divided by u^T W v from the cached singular vectors.
  Network effective_generator() const;
};

inline constexpr double kLogFloor = 1e-12;

GanModel make_gan(GanVariant variant, std::uint64_t seed, std::vector<int> generator_shape = {1, 128, 256, 1},
                  nn::SkipKind generator_skip = nn::SkipKind::none, double penalty_lip = 1.0);

/// Discriminator loss with the generator frozen. Binding: discriminator.
ModelLoss gan_discriminator_loss(const GanModel& model, const Matrix& real, const Matrix& latent);
/// Generator loss (plus the gradient penalty for that variant) with the
/// discriminator frozen. Binding: generator.
ModelLoss gan_generator_loss(const GanModel& model, const Matrix& latent);

struct GanLosses {
  ModelLoss discriminator;
  ModelLoss generator;
};
GanLosses gan_losses(const GanModel& model, const Matrix& real, const Matrix& latent);

/// (10/L^2) max_batch (|g'(z)| - L)^2, or (|g'(z)|^2 - L)^2 for the squared
/// form, with g'(z) the symmetric difference of step h recorded on the graph.
Var gradient_penalty(Graph& g, const nn::NetworkBinding& generator, const Matrix& latent, double lip,
                     PenaltyForm form, double h = 1e-3);
ModelLoss gradient_penalty(const Network& generator, const Matrix& latent, double lip,
                           PenaltyForm form = PenaltyForm::norm, double h = 1e-3);

// ---------------------------------------------------------------- SGM

struct SigmaSchedule {
  std::vector<double> sigmas;  // strictly decreasing

  static SigmaSchedule geometric(double first, double last, std::size_t levels);
  void validate() const;
  std::size_t size() const { return sigmas.size(); }
};

/// Largest noise level bridging two modes `separation` apart.
double default_sigma_max(double separation);

struct LangevinConfig {
  double epsilon = 2e-5;
  std::size_t steps_per_level = 100;
  LangevinNormalization normalization = LangevinNormalization::smallest_sigma;

  void validate() const;
};

/// alpha_i = epsilon * sigma_i^2 / sigma_ref^2.
double langevin_step_size(const SigmaSchedule& schedule, const LangevinConfig& cfg, std::size_t level);

struct SgmModel {
  Network score_net;
  SigmaSchedule schedule;
  LangevinConfig langevin;

  void validate() const;
};

SgmModel make_sgm(std::uint64_t seed, SigmaSchedule schedule, LangevinConfig langevin = {},
                  std::vector<int> shape = {1, 96, 196, 1}, nn::NoiseEmbedding embedding = {});

/// One schedule level per row, uniformly.
std::vector<double> draw_sigmas(const SigmaSchedule& schedule, std::size_t n, Rng& rng);

/// Mean of sigma^2 (s(y, sigma) + (y - x)/sigma^2)^2 with y = x + sigma xi.
/// Binding: score network.
ModelLoss dsm_loss(const SgmModel& model, const Matrix& batch, std::span<const double> sigmas,
                   const Matrix& gaussian_draws);

/// Batched score: fills `out` with s(y, sigma) for every entry of y.
using ScoreFn = std::function<void(const Vector& y, double sigma, Vector& out)>;
ScoreFn network_score(const Network& net);

/// Initial state and per-step innovations of the sampler, i.e. the latent
/// input of the sampler viewed as one deterministic map.
struct NoiseTape {
  Vector x0;
  Matrix z;  // [levels * steps x n], row k is the innovation of step k
};

NoiseTape make_noise_tape(std::size_t n, std::size_t levels, std::size_t steps_per_level, std::uint64_t seed);

/// Annealed Langevin dynamics x <- x + (alpha_i/2) s(x, sigma_i) + sqrt(alpha_i) z.
/// Throws NumericError naming level and step if the state becomes non-finite.
Vector langevin_sample(const ScoreFn& score, const SigmaSchedule& schedule, const LangevinConfig& cfg,
                       const NoiseTape& tape);
/// Same result as the tape overload with make_noise_tape(n, ..., seed).
Vector langevin_sample(const ScoreFn& score, const SigmaSchedule& schedule, const LangevinConfig& cfg, std::size_t n,
                       std::uint64_t seed);

// ---------------------------------------------------------------- training

struct TrainConfig {
  ModelKind kind = ModelKind::vae;
  GanVariant variant = GanVariant::vanilla;
  std::size_t epochs = 400;
  std::size_t batch_size = 1000;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;

  /// Generator / decoder / score trunk; empty selects the model default.
  std::vector<int> shape;
  nn::SkipKind skip = nn::SkipKind::none;

  double vae_c = 0.1;

  double gp_lip = 1.0;
  PenaltyForm gp_form = PenaltyForm::norm;
  bool gan_non_saturating = false;

  /// Mode separation of the target; sets the default largest noise level.
  double separation = 0.0;
  std::optional<double> sgm_sigma_max;
  double sgm_sigma_min = 0.01;
  std::size_t sgm_levels = 10;
  bool condition_output_layer = true;
  LangevinConfig langevin;

  std::size_t metrics_lip_grid = 1001;
  std::size_t metrics_samples = 2000;

  void validate(std::size_t dataset_size) const;
};

struct TrainedModel {
  ModelKind kind = ModelKind::vae;
  std::optional<VaeModel> vae;
  std::optional<GanModel> gan;
  std::optional<SgmModel> sgm;

  /// Decoder or (effective) generator. Throws for the score model.
  Network pushforward() const;
};

/// Samples of the push-forward: decoder/generator on N(0, 1) draws, or the
/// Langevin sampler for the score model.
std::vector<double> generate(const TrainedModel& model, std::size_t n, std::uint64_t seed);

/// Empirical Lipschitz estimate of the score model: largest |ds/dy| over the
/// schedule levels on the given grid.
LipschitzEstimate score_lipschitz(const SgmModel& model, double lo, double hi, std::size_t n_grid);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // discriminator loss for GANs
  double aux_loss = 0.0;  // generator loss for GANs, NaN otherwise
  double lip_empirical = 0.0;
  double lip_certified = 0.0;
  double mass_mid = 0.0;  // NaN for the score model
};

enum class RunStatus { ok, diverged };
std::string to_string(RunStatus s);

struct RunRecord {
  TrainConfig config;
  std::vector<EpochMetrics> metrics;
  RunStatus status = RunStatus::ok;
  std::string message;
  TrainedModel model;
  std::uint64_t rng_seed = 0;
};

/// Trains the configured model on `dataset`. A non-finite loss or gradient
/// stops training and returns the partial record flagged diverged.
RunRecord train(std::span<const double> dataset, const TrainConfig& config);

}  // namespace pflab::gen
