#pragma once

// Multilayer perceptrons with optional skip connections and noise
// conditioning, bound onto autodiff graphs for training.

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pflab/autodiff.hpp"

namespace pflab::nn {

enum class Activation : std::uint8_t { leaky_relu = 0, silu = 1, identity = 2 };
enum class SkipKind : std::uint8_t { none = 0, residual = 1, dense_concat = 2 };

std::string to_string(Activation a);
std::string to_string(SkipKind s);
Activation parse_activation(const std::string& s);
SkipKind parse_skip_kind(const std::string& s);

/// Sine/cosine encoding of log(sigma) followed by a small MLP whose output is
/// concatenated to the trunk activations.
struct NoiseEmbedding {
  int encoding_dim = 16;
  std::vector<int> mlp_shape{16, 32, 64};
  /// Also feed the embedding into the final (output) layer.
  bool condition_output_layer = true;

  void validate() const;
  int output_dim() const { return mlp_shape.back(); }
};

struct Layer {
  Matrix weight;  // [out x in]
  Matrix bias;    // [1 x out]
};

struct ParamRef {
  std::string path;
  Matrix* value;
};

struct ConstParamRef {
  std::string path;
  const Matrix* value;
};

struct MlpOptions {
  double slope = 0.2;
  bool activate_output = false;
  std::optional<NoiseEmbedding> conditioning;
};

class Network {
 public:
  std::vector<int> shape;
  Activation activation = Activation::leaky_relu;
  double slope = 0.2;
  SkipKind skip = SkipKind::none;
  bool activate_output = false;
  std::optional<NoiseEmbedding> conditioning;
  std::vector<Layer> layers;
  std::vector<Layer> embed_layers;

  std::size_t layer_count() const { return layers.size(); }
  int input_dim() const { return shape.front(); }
  int output_dim() const { return shape.back(); }

  /// Width of the input consumed by trunk layer j (skip and conditioning included).
  int layer_input_width(std::size_t j) const;
  /// Columns of layer j that read the noise embedding (0 if none).
  int conditioned_columns(std::size_t j) const;
  bool has_skip_into(std::size_t j) const;

  /// Trunk weights then biases per layer, then the embedding MLP.
  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  std::size_t parameter_count() const;

  void validate() const;

  bool operator==(const Network&) const;
};

/// Glorot-uniform weights, zero biases; deterministic in init_seed.
Network build_mlp(std::vector<int> shape, Activation activation, SkipKind skip, std::uint64_t init_seed,
                  const MlpOptions& options = {});

/// Cached singular vectors per trunk layer for power iteration.
struct SpectralNormState {
  std::vector<Vector> u;
  std::vector<Vector> v;
  std::vector<double> sigma;
};

SpectralNormState init_spectral_state(const Network& net, std::uint64_t seed);
/// Runs `iters` power iterations per trunk layer, updating the cache.
void power_iterate(const Network& net, SpectralNormState& state, int iters);
/// Copy of `net` with every trunk weight divided by its estimated top singular
/// value (after `power_iters` iterations). Layers with sigma below 1e-12 are
/// left untouched.
Network spectral_normalize(const Network& net, int power_iters, SpectralNormState& state);

/// Exact largest singular value.
double spectral_norm(const Matrix& m);

/// Network parameters placed on a graph. Weights may be routed through the
/// spectral-normalisation node; `leaves` follow Network::parameters() order.
struct NetworkBinding {
  const Network* net = nullptr;
  std::vector<Var> weights;
  std::vector<Var> biases;
  std::vector<Var> embed_weights;
  std::vector<Var> embed_biases;
  std::vector<Var> leaves;
  bool trainable = true;
};

/// trainable = false binds parameters as constants (no parameter gradients).
NetworkBinding bind(Graph& g, const Network& net, bool trainable = true,
                    const SpectralNormState* spectral = nullptr);

/// Applies the network to a batch [B x input_dim]. `sigmas` supplies one noise
/// level per row for conditioned networks and must be empty otherwise.
Var apply(const NetworkBinding& bound, Var input, std::span<const double> sigmas = {});

/// Parameter gradients after Graph::backward, aligned with Network::parameters().
std::vector<Matrix> collect_gradients(const Graph& g, const NetworkBinding& bound);

/// Self-contained forward pass owning its graph.
struct ForwardPass {
  std::unique_ptr<Graph> graph;
  NetworkBinding binding;
  Var input;
  Var output;
};

ForwardPass forward(const Network& net, const Matrix& input, std::optional<double> sigma = std::nullopt);

struct Gradients {
  std::vector<Matrix> params;
  Matrix input;
};

Gradients backward(ForwardPass& pass, const Matrix& output_adjoint);

/// Plain evaluation without gradient bookkeeping.
Matrix evaluate(const Network& net, const Matrix& input, std::span<const double> sigmas = {});

/// d output / d input for scalar-output networks, one row per input row.
Matrix input_jacobian(const Network& net, const Matrix& z, std::optional<double> sigma = std::nullopt);

Vector positional_encoding(double sigma, int dim);
/// Positional encoding of log(sigma) passed through the embedding MLP.
Vector noise_embed(const Network& net, double sigma);

/// Lipschitz upper bound from layer spectral norms and the activation's
/// Lipschitz constant; skip connections are accounted for through the
/// stacked linear map. For conditioned networks the bound is with respect to
/// the trunk input at fixed noise level.
double certified_lipschitz(const Network& net);
double activation_lipschitz(Activation a, double slope);

void save_network(std::ostream& os, const Network& net);
Network load_network(std::istream& is);

inline constexpr std::uint32_t kNetworkFormatVersion = 1;

}  // namespace pflab::nn
