#include "pflab/genmodels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "pflab/errors.hpp"

namespace pflab::gen {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix normals(Rng& rng, Eigen::Index rows) {
  Matrix m(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) m(i, 0) = rng.normal();
  return m;
}

void require_batch(const Matrix& m, const char* what) {
  if (m.rows() == 0 || m.cols() != 1) throw ConfigError(std::string(what) + ": need a nonempty column batch");
}

// relu(y) written through min(0, .) so that the graph needs no extra op.
Var relu(Graph& g, Var y) { return g.scale(g.min_zero(g.scale(y, -1.0)), -1.0); }

}  // namespace

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::vae:
      return "vae";
    case ModelKind::gan:
      return "gan";
    case ModelKind::sgm:
      return "sgm";
  }
  return "unknown";
}

std::string to_string(GanVariant v) {
  switch (v) {
    case GanVariant::vanilla:
      return "vanilla";
    case GanVariant::hinge:
      return "hinge";
    case GanVariant::sn_generator:
      return "sn_generator";
    case GanVariant::gradient_penalty:
      return "gradient_penalty";
  }
  return "unknown";
}

std::string to_string(PenaltyForm f) { return f == PenaltyForm::norm ? "norm" : "squared_norm"; }

std::string to_string(LangevinNormalization n) {
  return n == LangevinNormalization::smallest_sigma ? "smallest_sigma" : "largest_sigma";
}

std::string to_string(RunStatus s) { return s == RunStatus::ok ? "ok" : "diverged"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "vae") return ModelKind::vae;
  if (s == "gan") return ModelKind::gan;
  if (s == "sgm") return ModelKind::sgm;
  throw ConfigError("unknown model kind '" + s + "'");
}

GanVariant parse_gan_variant(const std::string& s) {
  if (s == "vanilla") return GanVariant::vanilla;
  if (s == "hinge") return GanVariant::hinge;
  if (s == "sn_generator" || s == "sn") return GanVariant::sn_generator;
  if (s == "gradient_penalty" || s == "gp") return GanVariant::gradient_penalty;
  throw ConfigError("unknown GAN variant '" + s + "'");
}

PenaltyForm parse_penalty_form(const std::string& s) {
  if (s == "norm") return PenaltyForm::norm;
  if (s == "squared_norm") return PenaltyForm::squared_norm;
  throw ConfigError("unknown penalty form '" + s + "'");
}

LangevinNormalization parse_langevin_normalization(const std::string& s) {
  if (s == "smallest_sigma") return LangevinNormalization::smallest_sigma;
  if (s == "largest_sigma") return LangevinNormalization::largest_sigma;
  throw ConfigError("unknown Langevin normalization '" + s + "'");
}

std::vector<double> sample_dataset(const GaussianMixture& nu, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("sample_dataset: need n >= 1");
  Rng rng(seed);
  const auto comps = nu.components();
  std::vector<double> out(n);
  for (auto& x : out) {
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = comps[0].weight;
    while (k + 1 < comps.size() && u >= acc) acc += comps[++k].weight;
    x = comps[k].mean + comps[k].sigma * rng.normal();
  }
  return out;
}

std::vector<Matrix> ModelLoss::gradients(std::size_t k) {
  if (k >= bindings.size()) throw UsageError("ModelLoss: no binding " + std::to_string(k));
  if (!swept) {
    graph->backward(loss);
    swept = true;
  }
  return nn::collect_gradients(*graph, bindings[k]);
}

// ---------------------------------------------------------------- VAE

void VaeModel::validate() const {
  if (!(c > 0.0)) throw ConfigError("VaeModel: c must be positive");
  encoder.validate();
  mean_head.validate();
  logvar_head.validate();
  decoder.validate();
  if (encoder.output_dim() != mean_head.input_dim() || encoder.output_dim() != logvar_head.input_dim()) {
    throw ConfigError("VaeModel: encoder heads do not match the trunk");
  }
  if (mean_head.output_dim() != decoder.input_dim() || logvar_head.output_dim() != decoder.input_dim()) {
    throw ConfigError("VaeModel: latent width mismatch");
  }
}

VaeModel make_vae(std::uint64_t seed, std::vector<int> decoder_shape, nn::SkipKind decoder_skip, double c) {
  using nn::Activation;
  VaeModel m;
  nn::MlpOptions trunk_opts;
  trunk_opts.activate_output = true;
  m.encoder = nn::build_mlp({1, 256, 128}, Activation::leaky_relu, nn::SkipKind::none, derive_seed(seed, 0),
                            trunk_opts);
  m.mean_head = nn::build_mlp({128, 1}, Activation::leaky_relu, nn::SkipKind::none, derive_seed(seed, 1));
  m.logvar_head = nn::build_mlp({128, 1}, Activation::leaky_relu, nn::SkipKind::none, derive_seed(seed, 2));
  m.decoder = nn::build_mlp(std::move(decoder_shape), Activation::leaky_relu, decoder_skip, derive_seed(seed, 3));
  m.c = c;
  m.validate();
  return m;
}

double vae_kl_term(double f1, double f2) { return 0.5 * (std::exp(f2) + f1 * f1 - 1.0 - f2); }

double vae_reconstruction_penalty(double x, double gx, double c) {
  const double d = x - gx;
  return d * d / (2.0 * c * c) + 0.5 * std::log(2.0 * std::numbers::pi * c * c);
}

ModelLoss vae_elbo_loss(const VaeModel& model, const Matrix& batch, const Matrix& noise) {
  require_batch(batch, "vae_elbo_loss");
  if (noise.rows() != batch.rows() || noise.cols() != 1) throw ConfigError("vae_elbo_loss: one draw per sample");
  ModelLoss out;
  out.graph = std::make_unique<Graph>();
  Graph& g = *out.graph;
  out.bindings.push_back(nn::bind(g, model.encoder));
  out.bindings.push_back(nn::bind(g, model.mean_head));
  out.bindings.push_back(nn::bind(g, model.logvar_head));
  out.bindings.push_back(nn::bind(g, model.decoder));
  Var x = g.constant(batch);
  Var xi = g.constant(noise);
  Var h = nn::apply(out.bindings[0], x);
  Var f1 = nn::apply(out.bindings[1], h);
  Var f2 = nn::apply(out.bindings[2], h);
  Var z = g.add(f1, g.mul(g.exp(g.scale(f2, 0.5)), xi));
  Var gz = nn::apply(out.bindings[3], z);
  const double c2 = model.c * model.c;
  Var rec = g.add_scalar(g.scale(g.square(g.sub(x, gz)), 1.0 / (2.0 * c2)),
                         0.5 * std::log(2.0 * std::numbers::pi * c2));
  Var kl = g.scale(g.add_scalar(g.sub(g.add(g.exp(f2), g.square(f1)), f2), -1.0), 0.5);
  out.loss = g.mean(g.add(rec, kl));
  return out;
}

// ---------------------------------------------------------------- GAN

void GanModel::validate() const {
  generator.validate();
  discriminator.validate();
  if (discriminator.output_dim() != 1) throw ConfigError("GanModel: discriminator must output a scalar");
  if (variant == GanVariant::gradient_penalty && !(penalty_lip > 0.0)) {
    throw ConfigError("GanModel: gradient penalty needs L > 0");
  }
  if (!(fd_step > 0.0)) throw ConfigError("GanModel: finite-difference step must be positive");
  if (disc_sn.u.size() != discriminator.layer_count()) throw ConfigError("GanModel: discriminator SN state missing");
  if (variant == GanVariant::sn_generator && gen_sn.u.size() != generator.layer_count()) {
    throw ConfigError("GanModel: generator SN state missing");
  }
}

Network GanModel::effective_generator() const {
  if (variant != GanVariant::sn_generator) return generator;
  Network out = generator;
  for (std::size_t j = 0; j < out.layers.size(); ++j) {
    const Matrix& w = generator.layers[j].weight;
    const double sigma = gen_sn.u[j].dot(w * gen_sn.v[j]);
    if (sigma >= 1e-12) out.layers[j].weight = w / sigma;
  }
  return out;
}

GanModel make_gan(GanVariant variant, std::uint64_t seed, std::vector<int> generator_shape,
                  nn::SkipKind generator_skip, double penalty_lip) {
  using nn::Activation;
  GanModel m;
  m.variant = variant;
  m.penalty_lip = penalty_lip;
  m.generator =
      nn::build_mlp(std::move(generator_shape), Activation::leaky_relu, generator_skip, derive_seed(seed, 0));
  m.discriminator = nn::build_mlp({1, 512, 256, 128, 1}, Activation::leaky_relu, nn::SkipKind::none,
                                  derive_seed(seed, 1));
  m.disc_sn = nn::init_spectral_state(m.discriminator, derive_seed(seed, 2));
  nn::power_iterate(m.discriminator, m.disc_sn, 50);
  if (variant == GanVariant::sn_generator) {
    m.gen_sn = nn::init_spectral_state(m.generator, derive_seed(seed, 3));
    nn::power_iterate(m.generator, m.gen_sn, 50);
  }
  m.validate();
  return m;
}

namespace {

// Per-batch adversarial terms on raw discriminator scores.
Var discriminator_objective(Graph& g, const GanModel& model, Var real_score, Var fake_score) {
  if (model.variant == GanVariant::hinge) {
    return g.add(g.mean(relu(g, g.add_scalar(g.scale(real_score, -1.0), 1.0))),
                 g.mean(relu(g, g.add_scalar(fake_score, 1.0))));
  }
  Var log_d_real = g.log(g.clamp_min(g.sigmoid(real_score), kLogFloor));
  Var log_1m_d_fake = g.log(g.clamp_min(g.sigmoid(g.scale(fake_score, -1.0)), kLogFloor));
  return g.scale(g.add(g.mean(log_d_real), g.mean(log_1m_d_fake)), -1.0);
}

Var generator_objective(Graph& g, const GanModel& model, Var fake_score) {
  if (model.variant == GanVariant::hinge) return g.scale(g.mean(fake_score), -1.0);
  if (model.non_saturating) {
    return g.scale(g.mean(g.log(g.clamp_min(g.sigmoid(fake_score), kLogFloor))), -1.0);
  }
  return g.mean(g.log(g.clamp_min(g.sigmoid(g.scale(fake_score, -1.0)), kLogFloor)));
}

}  // namespace

ModelLoss gan_discriminator_loss(const GanModel& model, const Matrix& real, const Matrix& latent) {
  require_batch(real, "gan_discriminator_loss");
  require_batch(latent, "gan_discriminator_loss");
  const Matrix fake = nn::evaluate(model.effective_generator(), latent);
  ModelLoss out;
  out.graph = std::make_unique<Graph>();
  Graph& g = *out.graph;
  out.bindings.push_back(nn::bind(g, model.discriminator, true, &model.disc_sn));
  Var real_score = nn::apply(out.bindings[0], g.constant(real));
  Var fake_score = nn::apply(out.bindings[0], g.constant(fake));
  out.loss = discriminator_objective(g, model, real_score, fake_score);
  return out;
}

ModelLoss gan_generator_loss(const GanModel& model, const Matrix& latent) {
  require_batch(latent, "gan_generator_loss");
  ModelLoss out;
  out.graph = std::make_unique<Graph>();
  Graph& g = *out.graph;
  const nn::SpectralNormState* gen_sn = model.variant == GanVariant::sn_generator ? &model.gen_sn : nullptr;
  out.bindings.push_back(nn::bind(g, model.generator, true, gen_sn));
  nn::NetworkBinding disc = nn::bind(g, model.discriminator, false, &model.disc_sn);
  Var fake = nn::apply(out.bindings[0], g.constant(latent));
  Var loss = generator_objective(g, model, nn::apply(disc, fake));
  if (model.variant == GanVariant::gradient_penalty) {
    loss = g.add(loss, gradient_penalty(g, out.bindings[0], latent, model.penalty_lip, model.penalty_form,
                                        model.fd_step));
  }
  out.loss = loss;
  return out;
}

GanLosses gan_losses(const GanModel& model, const Matrix& real, const Matrix& latent) {
  return {gan_discriminator_loss(model, real, latent), gan_generator_loss(model, latent)};
}

Var gradient_penalty(Graph& g, const nn::NetworkBinding& generator, const Matrix& latent, double lip,
                     PenaltyForm form, double h) {
  if (!(lip > 0.0)) throw DomainError("gradient_penalty: L must be positive");
  if (!(h > 0.0)) throw DomainError("gradient_penalty: step must be positive");
  require_batch(latent, "gradient_penalty");
  Var up = nn::apply(generator, g.constant(latent.array() + h));
  Var down = nn::apply(generator, g.constant(latent.array() - h));
  Var slope = g.scale(g.sub(up, down), 1.0 / (2.0 * h));
  Var dev = form == PenaltyForm::norm ? g.add_scalar(g.abs(slope), -lip) : g.add_scalar(g.square(slope), -lip);
  return g.scale(g.max(g.square(dev)), 10.0 / (lip * lip));
}

ModelLoss gradient_penalty(const Network& generator, const Matrix& latent, double lip, PenaltyForm form, double h) {
  ModelLoss out;
  out.graph = std::make_unique<Graph>();
  out.bindings.push_back(nn::bind(*out.graph, generator));
  out.loss = gradient_penalty(*out.graph, out.bindings[0], latent, lip, form, h);
  return out;
}

// ---------------------------------------------------------------- SGM

SigmaSchedule SigmaSchedule::geometric(double first, double last, std::size_t levels) {
  if (levels < 1) throw ConfigError("SigmaSchedule: need at least one level");
  if (!(first > 0.0) || !(last > 0.0)) throw ConfigError("SigmaSchedule: noise levels must be positive");
  if (levels > 1 && !(first > last)) throw ConfigError("SigmaSchedule: first level must exceed the last");
  SigmaSchedule s;
  if (levels == 1) {
    s.sigmas = {first};
    return s;
  }
  const double log_ratio = std::log(last / first) / static_cast<double>(levels - 1);
  for (std::size_t i = 0; i < levels; ++i) s.sigmas.push_back(first * std::exp(log_ratio * static_cast<double>(i)));
  s.sigmas.back() = last;
  return s;
}

void SigmaSchedule::validate() const {
  if (sigmas.empty()) throw ConfigError("SigmaSchedule: empty");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i])) throw ConfigError("SigmaSchedule: levels must be positive");
    if (i > 0 && !(sigmas[i] < sigmas[i - 1])) throw ConfigError("SigmaSchedule: levels must strictly decrease");
  }
}

double default_sigma_max(double separation) { return std::max(1.0, separation / 2.0); }

void LangevinConfig::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("LangevinConfig: epsilon must be positive");
  if (steps_per_level < 1) throw ConfigError("LangevinConfig: steps_per_level must be >= 1");
}

double langevin_step_size(const SigmaSchedule& schedule, const LangevinConfig& cfg, std::size_t level) {
  const double ref = cfg.normalization == LangevinNormalization::smallest_sigma ? schedule.sigmas.back()
                                                                                 : schedule.sigmas.front();
  const double s = schedule.sigmas.at(level);
  return cfg.epsilon * (s * s) / (ref * ref);
}

void SgmModel::validate() const {
  score_net.validate();
  schedule.validate();
  langevin.validate();
  if (!score_net.conditioning) throw ConfigError("SgmModel: score network must be noise conditioned");
}

SgmModel make_sgm(std::uint64_t seed, SigmaSchedule schedule, LangevinConfig langevin, std::vector<int> shape,
                  nn::NoiseEmbedding embedding) {
  SgmModel m;
  nn::MlpOptions opts;
  opts.conditioning = embedding;
  m.score_net = nn::build_mlp(std::move(shape), nn::Activation::leaky_relu, nn::SkipKind::none, seed, opts);
  m.schedule = std::move(schedule);
  m.langevin = langevin;
  m.validate();
  return m;
}

std::vector<double> draw_sigmas(const SigmaSchedule& schedule, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  for (auto& s : out) s = schedule.sigmas[rng.below(schedule.size())];
  return out;
}

ModelLoss dsm_loss(const SgmModel& model, const Matrix& batch, std::span<const double> sigmas,
                   const Matrix& gaussian_draws) {
  require_batch(batch, "dsm_loss");
  const Eigen::Index n = batch.rows();
  if (static_cast<Eigen::Index>(sigmas.size()) != n || gaussian_draws.rows() != n || gaussian_draws.cols() != 1) {
    throw ConfigError("dsm_loss: one noise level and one draw per sample");
  }
  Matrix y(n, 1);
  Matrix target(n, 1);
  Matrix weight(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = sigmas[static_cast<std::size_t>(i)];
    y(i, 0) = batch(i, 0) + s * gaussian_draws(i, 0);
    target(i, 0) = (y(i, 0) - batch(i, 0)) / (s * s);
    weight(i, 0) = s * s;
  }
  ModelLoss out;
  out.graph = std::make_unique<Graph>();
  Graph& g = *out.graph;
  out.bindings.push_back(nn::bind(g, model.score_net));
  Var s = nn::apply(out.bindings[0], g.constant(std::move(y)), sigmas);
  Var resid = g.add(s, g.constant(std::move(target)));
  out.loss = g.mean(g.mul(g.constant(std::move(weight)), g.square(resid)));
  return out;
}

ScoreFn network_score(const Network& net) {
  return [net](const Vector& y, double sigma, Vector& out) {
    const std::vector<double> sig(static_cast<std::size_t>(y.size()), sigma);
    out = nn::evaluate(net, Matrix(y), sig).col(0);
  };
}

NoiseTape make_noise_tape(std::size_t n, std::size_t levels, std::size_t steps_per_level, std::uint64_t seed) {
  Rng rng(seed);
  NoiseTape tape;
  const auto cols = static_cast<Eigen::Index>(n);
  tape.x0.resize(cols);
  for (Eigen::Index i = 0; i < cols; ++i) tape.x0(i) = rng.normal();
  tape.z.resize(static_cast<Eigen::Index>(levels * steps_per_level), cols);
  for (Eigen::Index k = 0; k < tape.z.rows(); ++k) {
    for (Eigen::Index i = 0; i < cols; ++i) tape.z(k, i) = rng.normal();
  }
  return tape;
}

namespace {

template <typename NextNoise>
Vector run_langevin(const ScoreFn& score, const SigmaSchedule& schedule, const LangevinConfig& cfg, Vector x,
                    NextNoise&& next_noise) {
  schedule.validate();
  cfg.validate();
  Vector s(x.size());
  Vector z(x.size());
  for (std::size_t level = 0; level < schedule.size(); ++level) {
    const double alpha = langevin_step_size(schedule, cfg, level);
    const double root = std::sqrt(alpha);
    const double sigma = schedule.sigmas[level];
    for (std::size_t t = 0; t < cfg.steps_per_level; ++t) {
      score(x, sigma, s);
      next_noise(level * cfg.steps_per_level + t, z);
      x += (0.5 * alpha) * s + root * z;
      if (!x.allFinite()) {
        std::ostringstream msg;
        msg << "langevin_sample: non-finite state at level " << level + 1 << ", step " << t + 1;
        throw NumericError(msg.str());
      }
    }
  }
  return x;
}

}  // namespace

Vector langevin_sample(const ScoreFn& score, const SigmaSchedule& schedule, const LangevinConfig& cfg,
                       const NoiseTape& tape) {
  if (tape.z.rows() != static_cast<Eigen::Index>(schedule.size() * cfg.steps_per_level) ||
      tape.z.cols() != tape.x0.size()) {
    throw ConfigError("langevin_sample: noise tape does not match schedule");
  }
  return run_langevin(score, schedule, cfg, tape.x0,
                      [&](std::size_t k, Vector& z) { z = tape.z.row(static_cast<Eigen::Index>(k)).transpose(); });
}

Vector langevin_sample(const ScoreFn& score, const SigmaSchedule& schedule, const LangevinConfig& cfg, std::size_t n,
                       std::uint64_t seed) {
  if (n < 1) throw DomainError("langevin_sample: need n >= 1");
  Rng rng(seed);
  Vector x0(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = rng.normal();
  return run_langevin(score, schedule, cfg, std::move(x0), [&](std::size_t, Vector& z) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  });
}

// ---------------------------------------------------------------- training

void TrainConfig::validate(std::size_t dataset_size) const {
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (batch_size > dataset_size) throw ConfigError("TrainConfig: batch_size exceeds the dataset size");
  nn::AdamConfig{lr, beta1, beta2, 1e-8}.validate();
  if (!(vae_c > 0.0)) throw ConfigError("TrainConfig: vae_c must be positive");
  if (!(gp_lip > 0.0)) throw ConfigError("TrainConfig: gp_lip must be positive");
  if (!(separation >= 0.0)) throw ConfigError("TrainConfig: separation must be nonnegative");
  if (sgm_sigma_max && !(*sgm_sigma_max > sgm_sigma_min)) {
    throw ConfigError("TrainConfig: sgm_sigma_max must exceed sgm_sigma_min");
  }
  if (!(sgm_sigma_min > 0.0)) throw ConfigError("TrainConfig: sgm_sigma_min must be positive");
  if (sgm_levels < 1) throw ConfigError("TrainConfig: sgm_levels must be >= 1");
  if (metrics_lip_grid < 2) throw ConfigError("TrainConfig: metrics_lip_grid must be >= 2");
  if (metrics_samples < 1) throw ConfigError("TrainConfig: metrics_samples must be >= 1");
  langevin.validate();
}

Network TrainedModel::pushforward() const {
  switch (kind) {
    case ModelKind::vae:
      return vae->decoder;
    case ModelKind::gan:
      return gan->effective_generator();
    case ModelKind::sgm:
      break;
  }
  throw UsageError("pushforward: the score model has no single push-forward network");
}

std::vector<double> generate(const TrainedModel& model, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("generate: need n >= 1");
  if (model.kind == ModelKind::sgm) {
    const SgmModel& m = *model.sgm;
    const Vector x = langevin_sample(network_score(m.score_net), m.schedule, m.langevin, n, seed);
    return {x.data(), x.data() + x.size()};
  }
  Rng rng(seed);
  const Matrix z = normals(rng, static_cast<Eigen::Index>(n));
  const Matrix x = nn::evaluate(model.pushforward(), z);
  return {x.data(), x.data() + x.size()};
}

LipschitzEstimate score_lipschitz(const SgmModel& model, double lo, double hi, std::size_t n_grid) {
  LipschitzEstimate est;
  for (double sigma : model.schedule.sigmas) {
    const LipschitzEstimate e = empirical_lipschitz(model.score_net, lo, hi, n_grid, sigma);
    est.empirical_lower = std::max(est.empirical_lower, e.empirical_lower);
  }
  est.certified_upper = nn::certified_lipschitz(model.score_net);
  est.lo = lo;
  est.hi = hi;
  est.grid_points = n_grid;
  return est;
}

namespace {

class Trainer {
 public:
  Trainer(std::span<const double> data, const TrainConfig& cfg)
      : data_(data), cfg_(cfg), rng_(derive_seed(cfg.seed, 1)), order_(data.size()) {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    adam_.lr = cfg.lr;
    adam_.beta1 = cfg.beta1;
    adam_.beta2 = cfg.beta2;
    Rng diag(derive_seed(cfg.seed, 2));
    diag_latent_ = normals(diag, static_cast<Eigen::Index>(cfg.metrics_samples));
  }

  RunRecord run() {
    RunRecord rec;
    rec.config = cfg_;
    rec.rng_seed = cfg_.seed;
    init(rec.model);
    for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      shuffle();
      double loss_sum = 0.0;
      double aux_sum = 0.0;
      std::size_t batches = 0;
      try {
        for (std::size_t start = 0; start < data_.size(); start += cfg_.batch_size) {
          const std::size_t len = std::min(cfg_.batch_size, data_.size() - start);
          Matrix batch(static_cast<Eigen::Index>(len), 1);
          for (std::size_t i = 0; i < len; ++i) batch(static_cast<Eigen::Index>(i), 0) = data_[order_[start + i]];
          const auto [loss, aux] = step(rec.model, batch);
          if (!std::isfinite(loss) || !std::isfinite(aux)) {
            throw TrainingError("non-finite loss at epoch " + std::to_string(epoch));
          }
          loss_sum += loss;
          aux_sum += aux;
          ++batches;
        }
      } catch (const TrainingError& e) {
        rec.status = RunStatus::diverged;
        rec.message = e.what();
        return rec;
      }
      EpochMetrics m = measure(rec.model);
      m.epoch = epoch;
      m.loss = loss_sum / static_cast<double>(batches);
      m.aux_loss = cfg_.kind == ModelKind::gan ? aux_sum / static_cast<double>(batches) : kNaN;
      rec.metrics.push_back(m);
    }
    return rec;
  }

 private:
  std::vector<int> shape() const {
    if (!cfg_.shape.empty()) return cfg_.shape;
    return cfg_.kind == ModelKind::sgm ? std::vector<int>{1, 96, 196, 1} : std::vector<int>{1, 128, 256, 1};
  }

  void init(TrainedModel& model) {
    model.kind = cfg_.kind;
    const std::uint64_t init_seed = derive_seed(cfg_.seed, 0);
    switch (cfg_.kind) {
      case ModelKind::vae: {
        model.vae = make_vae(init_seed, shape(), cfg_.skip, cfg_.vae_c);
        for (const Network* n : {&model.vae->encoder, &model.vae->mean_head, &model.vae->logvar_head,
                                 &model.vae->decoder}) {
          states_.push_back(nn::make_adam_state(*n, adam_));
        }
        break;
      }
      case ModelKind::gan: {
        model.gan = make_gan(cfg_.variant, init_seed, shape(), cfg_.skip, cfg_.gp_lip);
        model.gan->penalty_form = cfg_.gp_form;
        model.gan->non_saturating = cfg_.gan_non_saturating;
        states_.push_back(nn::make_adam_state(model.gan->discriminator, adam_));
        states_.push_back(nn::make_adam_state(model.gan->generator, adam_));
        break;
      }
      case ModelKind::sgm: {
        const double top = cfg_.sgm_sigma_max.value_or(default_sigma_max(cfg_.separation));
        nn::NoiseEmbedding emb;
        emb.condition_output_layer = cfg_.condition_output_layer;
        model.sgm = make_sgm(init_seed, SigmaSchedule::geometric(top, cfg_.sgm_sigma_min, cfg_.sgm_levels),
                             cfg_.langevin, shape(), emb);
        if (cfg_.skip != nn::SkipKind::none) throw ConfigError("train: skip connections are not used by the score model");
        states_.push_back(nn::make_adam_state(model.sgm->score_net, adam_));
        break;
      }
    }
  }

  void shuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
  }

  std::pair<double, double> step(TrainedModel& model, const Matrix& batch) {
    const Eigen::Index n = batch.rows();
    switch (cfg_.kind) {
      case ModelKind::vae: {
        VaeModel& m = *model.vae;
        ModelLoss loss = vae_elbo_loss(m, batch, normals(rng_, n));
        Network* nets[] = {&m.encoder, &m.mean_head, &m.logvar_head, &m.decoder};
        std::vector<std::vector<Matrix>> grads;
        for (std::size_t k = 0; k < 4; ++k) grads.push_back(loss.gradients(k));
        for (std::size_t k = 0; k < 4; ++k) nn::adam_step(*nets[k], grads[k], states_[k]);
        return {loss.value(), 0.0};
      }
      case ModelKind::gan: {
        GanModel& m = *model.gan;
        if (m.variant == GanVariant::sn_generator) nn::power_iterate(m.generator, m.gen_sn, 1);
        nn::power_iterate(m.discriminator, m.disc_sn, 1);
        ModelLoss d_loss = gan_discriminator_loss(m, batch, normals(rng_, n));
        nn::adam_step(m.discriminator, d_loss.gradients(0), states_[0]);
        ModelLoss g_loss = gan_generator_loss(m, normals(rng_, n));
        nn::adam_step(m.generator, g_loss.gradients(0), states_[1]);
        return {d_loss.value(), g_loss.value()};
      }
      case ModelKind::sgm: {
        SgmModel& m = *model.sgm;
        const std::vector<double> sigmas = draw_sigmas(m.schedule, static_cast<std::size_t>(n), rng_);
        ModelLoss loss = dsm_loss(m, batch, sigmas, normals(rng_, n));
        nn::adam_step(m.score_net, loss.gradients(0), states_[0]);
        return {loss.value(), 0.0};
      }
    }
    return {kNaN, kNaN};
  }

  EpochMetrics measure(const TrainedModel& model) const {
    EpochMetrics m;
    const double half = cfg_.separation / 2.0;
    if (cfg_.kind == ModelKind::sgm) {
      const LipschitzEstimate est = score_lipschitz(*model.sgm, -half - 3.0, half + 3.0, cfg_.metrics_lip_grid);
      m.lip_empirical = est.empirical_lower;
      m.lip_certified = est.certified_upper;
      m.mass_mid = kNaN;
      return m;
    }
    const Network net = model.pushforward();
    const LipschitzEstimate est = empirical_lipschitz(net, kLipGridLo, kLipGridHi, cfg_.metrics_lip_grid);
    m.lip_empirical = est.empirical_lower;
    m.lip_certified = est.certified_upper;
    const Matrix x = nn::evaluate(net, diag_latent_);
    m.mass_mid = interval_mass(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), -half / 2.0,
                               half / 2.0);
    return m;
  }

  std::span<const double> data_;
  const TrainConfig& cfg_;
  Rng rng_;
  std::vector<std::size_t> order_;
  nn::AdamConfig adam_;
  std::vector<nn::AdamState> states_;
  Matrix diag_latent_;
};

}  // namespace

RunRecord train(std::span<const double> dataset, const TrainConfig& config) {
  config.validate(dataset.size());
  Trainer trainer(dataset, config);
  return trainer.run();
}

}  // namespace pflab::gen
