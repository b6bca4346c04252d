#include "pflab/network.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>

#include "pflab/errors.hpp"
#include "pflab/rng.hpp"

namespace pflab::nn {

namespace {

constexpr std::size_t kChunkRows = 8192;
constexpr double kSigmaFloor = 1e-12;

Var activate(Graph& g, Var a, Activation act, double slope) {
  switch (act) {
    case Activation::leaky_relu:
      return g.leaky_relu(a, slope);
    case Activation::silu:
      return g.silu(a);
    case Activation::identity:
      return a;
  }
  return a;
}

void init_layer(Layer& layer, int out, int in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  layer.weight.resize(out, in);
  for (int r = 0; r < out; ++r) {
    for (int c = 0; c < in; ++c) layer.weight(r, c) = (2.0 * rng.uniform() - 1.0) * limit;
  }
  layer.bias = Matrix::Zero(1, out);
}

Vector random_unit(Eigen::Index n, Rng& rng) {
  Vector u(n);
  for (Eigen::Index i = 0; i < n; ++i) u(i) = rng.normal();
  const double norm = u.norm();
  if (norm > 0.0) u /= norm;
  return u;
}

// --- binary container helpers (little endian) ---

void put_u8(std::ostream& os, std::uint8_t x) { os.put(static_cast<char>(x)); }

void put_u32(std::ostream& os, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((x >> (8 * i)) & 0xFF));
}

void put_i32(std::ostream& os, std::int32_t x) { put_u32(os, static_cast<std::uint32_t>(x)); }

void put_f64(std::ostream& os, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::uint8_t get_u8(std::istream& is) {
  const int c = is.get();
  if (c == std::char_traits<char>::eof()) throw ConfigError("load_network: truncated stream");
  return static_cast<std::uint8_t>(c);
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(get_u8(is)) << (8 * i);
  return x;
}

std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_u32(is)); }

double get_f64(std::istream& is) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(get_u8(is)) << (8 * i);
  return std::bit_cast<double>(bits);
}

void put_matrix(std::ostream& os, const Matrix& m) {
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(os, m(r, c));
  }
}

Matrix get_matrix(std::istream& is) {
  const std::uint32_t rows = get_u32(is);
  const std::uint32_t cols = get_u32(is);
  if (static_cast<std::uint64_t>(rows) * cols > (std::uint64_t{1} << 28)) {
    throw ConfigError("load_network: implausible matrix size");
  }
  Matrix m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = get_f64(is);
  }
  return m;
}

constexpr std::array<char, 8> kMagic{'P', 'F', 'L', 'A', 'B', 'N', 'E', 'T'};

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::leaky_relu:
      return "leaky_relu";
    case Activation::silu:
      return "silu";
    case Activation::identity:
      return "identity";
  }
  return "unknown";
}

std::string to_string(SkipKind s) {
  switch (s) {
    case SkipKind::none:
      return "none";
    case SkipKind::residual:
      return "residual";
    case SkipKind::dense_concat:
      return "dense_concat";
  }
  return "unknown";
}

Activation parse_activation(const std::string& s) {
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "silu") return Activation::silu;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

SkipKind parse_skip_kind(const std::string& s) {
  if (s == "none") return SkipKind::none;
  if (s == "residual" || s == "resnet") return SkipKind::residual;
  if (s == "dense_concat" || s == "densenet") return SkipKind::dense_concat;
  throw ConfigError("unknown skip kind '" + s + "'");
}

void NoiseEmbedding::validate() const {
  if (encoding_dim <= 0 || encoding_dim % 2 != 0) {
    throw ConfigError("NoiseEmbedding: encoding_dim must be positive and even");
  }
  if (mlp_shape.size() < 2) throw ConfigError("NoiseEmbedding: mlp_shape needs at least two widths");
  if (mlp_shape.front() != encoding_dim) {
    throw ConfigError("NoiseEmbedding: mlp_shape must start at encoding_dim");
  }
  for (int w : mlp_shape) {
    if (w <= 0) throw ConfigError("NoiseEmbedding: widths must be positive");
  }
}

bool Network::has_skip_into(std::size_t j) const {
  return skip != SkipKind::none && j >= 1 && j + 1 < layers.size();
}

int Network::conditioned_columns(std::size_t j) const {
  if (!conditioning || j == 0) return 0;
  if (j + 1 == shape.size() - 1 && !conditioning->condition_output_layer) return 0;
  return conditioning->output_dim();
}

int Network::layer_input_width(std::size_t j) const {
  int width = shape.at(j);
  if (skip == SkipKind::dense_concat && has_skip_into(j)) width += shape[j];
  return width + conditioned_columns(j);
}

std::vector<ParamRef> Network::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t j = 0; j < layers.size(); ++j) {
    out.push_back({"layers[" + std::to_string(j) + "].weight", &layers[j].weight});
    out.push_back({"layers[" + std::to_string(j) + "].bias", &layers[j].bias});
  }
  for (std::size_t j = 0; j < embed_layers.size(); ++j) {
    out.push_back({"embed[" + std::to_string(j) + "].weight", &embed_layers[j].weight});
    out.push_back({"embed[" + std::to_string(j) + "].bias", &embed_layers[j].bias});
  }
  return out;
}

std::vector<ConstParamRef> Network::parameters() const {
  std::vector<ConstParamRef> out;
  for (auto& p : const_cast<Network*>(this)->parameters()) out.push_back({p.path, p.value});
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += static_cast<std::size_t>(p.value->size());
  return n;
}

void Network::validate() const {
  if (shape.size() < 2) throw ConfigError("Network: shape needs at least two widths");
  for (int w : shape) {
    if (w <= 0) throw ConfigError("Network: widths must be positive");
  }
  if (layers.size() != shape.size() - 1) throw ConfigError("Network: layer count does not match shape");
  if (conditioning) conditioning->validate();
  for (std::size_t j = 0; j < layers.size(); ++j) {
    if (skip == SkipKind::residual && has_skip_into(j) && shape[j] != shape[j + 1]) {
      throw ConfigError("Network: residual skip into layer " + std::to_string(j) + " joins widths " +
                        std::to_string(shape[j]) + " and " + std::to_string(shape[j + 1]));
    }
    const Layer& l = layers[j];
    if (l.weight.rows() != shape[j + 1] || l.weight.cols() != layer_input_width(j) || l.bias.rows() != 1 ||
        l.bias.cols() != shape[j + 1]) {
      throw ConfigError("Network: layer " + std::to_string(j) + " has inconsistent shape");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw ConfigError("Network: non-finite weights");
  }
  const std::size_t n_embed = conditioning ? conditioning->mlp_shape.size() - 1 : 0;
  if (embed_layers.size() != n_embed) throw ConfigError("Network: embedding layer count mismatch");
  for (std::size_t j = 0; j < n_embed; ++j) {
    const Layer& l = embed_layers[j];
    if (l.weight.rows() != conditioning->mlp_shape[j + 1] || l.weight.cols() != conditioning->mlp_shape[j]) {
      throw ConfigError("Network: embedding layer " + std::to_string(j) + " has inconsistent shape");
    }
  }
}

bool Network::operator==(const Network& o) const {
  auto same_layers = [](const std::vector<Layer>& a, const std::vector<Layer>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].weight.rows() != b[i].weight.rows() || a[i].weight.cols() != b[i].weight.cols()) return false;
      if (a[i].bias.cols() != b[i].bias.cols()) return false;
      if (std::memcmp(a[i].weight.data(), b[i].weight.data(), sizeof(double) * a[i].weight.size()) != 0) {
        return false;
      }
      if (std::memcmp(a[i].bias.data(), b[i].bias.data(), sizeof(double) * a[i].bias.size()) != 0) return false;
    }
    return true;
  };
  const bool same_cond =
      conditioning.has_value() == o.conditioning.has_value() &&
      (!conditioning || (conditioning->encoding_dim == o.conditioning->encoding_dim &&
                         conditioning->mlp_shape == o.conditioning->mlp_shape &&
                         conditioning->condition_output_layer == o.conditioning->condition_output_layer));
  return shape == o.shape && activation == o.activation && slope == o.slope && skip == o.skip &&
         activate_output == o.activate_output && same_cond && same_layers(layers, o.layers) &&
         same_layers(embed_layers, o.embed_layers);
}

Network build_mlp(std::vector<int> shape, Activation activation, SkipKind skip, std::uint64_t init_seed,
                  const MlpOptions& options) {
  Network net;
  net.shape = std::move(shape);
  net.activation = activation;
  net.slope = options.slope;
  net.skip = skip;
  net.activate_output = options.activate_output;
  net.conditioning = options.conditioning;
  if (net.shape.size() < 2) throw ConfigError("build_mlp: shape needs at least two widths");
  for (int w : net.shape) {
    if (w <= 0) throw ConfigError("build_mlp: widths must be positive");
  }
  if (net.conditioning) net.conditioning->validate();

  Rng rng(init_seed);
  net.layers.resize(net.shape.size() - 1);
  for (std::size_t j = 0; j < net.layers.size(); ++j) {
    if (skip == SkipKind::residual && net.has_skip_into(j) && net.shape[j] != net.shape[j + 1]) {
      throw ConfigError("build_mlp: residual skip into layer " + std::to_string(j) + " joins widths " +
                        std::to_string(net.shape[j]) + " and " + std::to_string(net.shape[j + 1]));
    }
    init_layer(net.layers[j], net.shape[j + 1], net.layer_input_width(j), rng);
  }
  if (net.conditioning) {
    const auto& ms = net.conditioning->mlp_shape;
    net.embed_layers.resize(ms.size() - 1);
    for (std::size_t j = 0; j + 1 < ms.size(); ++j) init_layer(net.embed_layers[j], ms[j + 1], ms[j], rng);
  }
  net.validate();
  return net;
}

SpectralNormState init_spectral_state(const Network& net, std::uint64_t seed) {
  Rng rng(seed);
  SpectralNormState state;
  for (const auto& layer : net.layers) {
    state.u.push_back(random_unit(layer.weight.rows(), rng));
    state.v.push_back(Vector::Zero(layer.weight.cols()));
    state.sigma.push_back(0.0);
  }
  return state;
}

void power_iterate(const Network& net, SpectralNormState& state, int iters) {
  if (iters < 1) throw ConfigError("power_iterate: need at least one iteration");
  if (state.u.size() != net.layers.size()) throw ConfigError("power_iterate: state does not match network");
  for (std::size_t j = 0; j < net.layers.size(); ++j) {
    const Matrix& w = net.layers[j].weight;
    Vector& u = state.u[j];
    Vector& v = state.v[j];
    for (int it = 0; it < iters; ++it) {
      Vector wt_u = w.transpose() * u;
      const double nv = wt_u.norm();
      if (!(nv > 1e-300)) break;
      v = wt_u / nv;
      Vector w_v = w * v;
      const double nu = w_v.norm();
      if (!(nu > 1e-300)) break;
      u = w_v / nu;
    }
    state.sigma[j] = v.size() > 0 && v.norm() > 0.0 ? u.dot(w * v) : 0.0;
  }
}

Network spectral_normalize(const Network& net, int power_iters, SpectralNormState& state) {
  power_iterate(net, state, power_iters);
  Network out = net;
  for (std::size_t j = 0; j < out.layers.size(); ++j) {
    if (state.sigma[j] >= kSigmaFloor) out.layers[j].weight /= state.sigma[j];
  }
  return out;
}

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.cols() == 1) return m.col(0).norm();
  if (m.rows() == 1) return m.row(0).norm();
  Matrix gram = m.rows() >= m.cols() ? Matrix(m.transpose() * m) : Matrix(m * m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

NetworkBinding bind(Graph& g, const Network& net, bool trainable, const SpectralNormState* spectral) {
  NetworkBinding b;
  b.net = &net;
  b.trainable = trainable;
  auto leaf = [&](const Matrix& m) {
    Var v = trainable ? g.variable(m) : g.constant(m);
    b.leaves.push_back(v);
    return v;
  };
  for (std::size_t j = 0; j < net.layers.size(); ++j) {
    Var w = leaf(net.layers[j].weight);
    Var bias = leaf(net.layers[j].bias);
    if (spectral != nullptr && j < spectral->sigma.size() && spectral->sigma[j] >= kSigmaFloor) {
      w = g.spectral_weight(w, spectral->u[j], spectral->v[j]);
    }
    b.weights.push_back(w);
    b.biases.push_back(bias);
  }
  for (const auto& layer : net.embed_layers) {
    b.embed_weights.push_back(leaf(layer.weight));
    b.embed_biases.push_back(leaf(layer.bias));
  }
  return b;
}

Var apply(const NetworkBinding& bound, Var input, std::span<const double> sigmas) {
  const Network& net = *bound.net;
  Graph& g = *input.graph;
  if (input.cols() != net.input_dim()) {
    throw ConfigError("apply: input width " + std::to_string(input.cols()) + " does not match network input " +
                      std::to_string(net.input_dim()));
  }
  std::optional<Var> embedding;
  if (net.conditioning) {
    if (sigmas.size() != static_cast<std::size_t>(input.rows())) {
      throw ConfigError("apply: conditioned network needs one noise level per row");
    }
    const int dim = net.conditioning->encoding_dim;
    Matrix enc(input.rows(), dim);
    Vector last_enc;
    for (Eigen::Index r = 0; r < input.rows(); ++r) {
      if (r == 0 || sigmas[r] != sigmas[r - 1]) last_enc = positional_encoding(sigmas[r], dim);
      enc.row(r) = last_enc.transpose();
    }
    Var e = g.constant(std::move(enc));
    for (std::size_t j = 0; j < bound.embed_weights.size(); ++j) {
      e = activate(g, g.linear(e, bound.embed_weights[j], bound.embed_biases[j]), net.activation, net.slope);
    }
    embedding = e;
  } else if (!sigmas.empty()) {
    throw ConfigError("apply: noise levels given to an unconditioned network");
  }

  Var h = input;
  Var a_prev = input;
  const std::size_t n = net.layers.size();
  for (std::size_t j = 0; j < n; ++j) {
    Var in = h;
    if (net.skip == SkipKind::dense_concat && net.has_skip_into(j)) in = g.concat_cols(in, a_prev);
    if (net.conditioned_columns(j) > 0) in = g.concat_cols(in, *embedding);
    Var a = g.linear(in, bound.weights[j], bound.biases[j]);
    if (net.skip == SkipKind::residual && net.has_skip_into(j)) a = g.add(a, a_prev);
    const bool last = j + 1 == n;
    h = (!last || net.activate_output) ? activate(g, a, net.activation, net.slope) : a;
    a_prev = a;
  }
  return h;
}

std::vector<Matrix> collect_gradients(const Graph& g, const NetworkBinding& bound) {
  std::vector<Matrix> grads;
  grads.reserve(bound.leaves.size());
  for (Var v : bound.leaves) grads.push_back(g.grad(v));
  return grads;
}

ForwardPass forward(const Network& net, const Matrix& input, std::optional<double> sigma) {
  ForwardPass pass;
  pass.graph = std::make_unique<Graph>();
  pass.binding = bind(*pass.graph, net, true);
  pass.input = pass.graph->variable(input);
  std::vector<double> sig;
  if (sigma) sig.assign(static_cast<std::size_t>(input.rows()), *sigma);
  pass.output = apply(pass.binding, pass.input, sig);
  return pass;
}

Gradients backward(ForwardPass& pass, const Matrix& output_adjoint) {
  if (!pass.graph) throw UsageError("backward: forward pass has not been run");
  pass.graph->backward(pass.output, output_adjoint);
  Gradients out;
  out.params = collect_gradients(*pass.graph, pass.binding);
  out.input = pass.graph->grad(pass.input);
  return out;
}

Matrix evaluate(const Network& net, const Matrix& input, std::span<const double> sigmas) {
  Matrix out(input.rows(), net.output_dim());
  for (Eigen::Index start = 0; start < input.rows(); start += kChunkRows) {
    const Eigen::Index len = std::min<Eigen::Index>(kChunkRows, input.rows() - start);
    Graph g;
    NetworkBinding b = bind(g, net, false);
    Var x = g.constant(input.middleRows(start, len));
    std::span<const double> sig = sigmas.empty() ? sigmas : sigmas.subspan(start, len);
    out.middleRows(start, len) = apply(b, x, sig).value();
  }
  return out;
}

Matrix input_jacobian(const Network& net, const Matrix& z, std::optional<double> sigma) {
  if (net.output_dim() != 1) throw ConfigError("input_jacobian: scalar-output network required");
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index start = 0; start < z.rows(); start += kChunkRows) {
    const Eigen::Index len = std::min<Eigen::Index>(kChunkRows, z.rows() - start);
    Graph g;
    NetworkBinding b = bind(g, net, false);
    Var x = g.variable(z.middleRows(start, len));
    std::vector<double> sig;
    if (sigma) sig.assign(static_cast<std::size_t>(len), *sigma);
    Var y = apply(b, x, sig);
    g.backward(y, Matrix::Ones(len, 1));
    out.middleRows(start, len) = g.grad(x);
  }
  return out;
}

Vector positional_encoding(double sigma, int dim) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("positional_encoding: sigma must be positive");
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("positional_encoding: dim must be positive and even");
  const int half = dim / 2;
  const double pos = std::log(sigma);
  Vector enc(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / half);
    enc(k) = std::sin(pos * freq);
    enc(half + k) = std::cos(pos * freq);
  }
  return enc;
}

Vector noise_embed(const Network& net, double sigma) {
  if (!net.conditioning) throw ConfigError("noise_embed: network has no conditioning");
  Vector e = positional_encoding(sigma, net.conditioning->encoding_dim);
  for (const auto& layer : net.embed_layers) {
    Vector a = layer.weight * e + layer.bias.row(0).transpose();
    switch (net.activation) {
      case Activation::leaky_relu:
        e = a.unaryExpr([&](double x) { return x > 0.0 ? x : net.slope * x; });
        break;
      case Activation::silu:
        e = a.unaryExpr([](double x) { return x / (1.0 + std::exp(-x)); });
        break;
      case Activation::identity:
        e = a;
        break;
    }
  }
  return e;
}

double activation_lipschitz(Activation a, double slope) {
  switch (a) {
    case Activation::leaky_relu:
      return std::max(1.0, std::abs(slope));
    case Activation::silu:
      return 1.0999;  // sup of silu' is 1.09984...
    case Activation::identity:
      return 1.0;
  }
  return 1.0;
}

double certified_lipschitz(const Network& net) {
  const double act = activation_lipschitz(net.activation, net.slope);
  double lip_pre = 1.0;  // Lipschitz constant of the current pre-activation
  for (std::size_t j = 0; j < net.layers.size(); ++j) {
    const Matrix& w = net.layers[j].weight;
    const int trunk_cols = net.layer_input_width(j) - net.conditioned_columns(j);
    const double norm = spectral_norm(w.leftCols(trunk_cols));
    if (j == 0) {
      lip_pre = norm;
      continue;
    }
    if (net.has_skip_into(j) && net.skip == SkipKind::residual) {
      lip_pre = norm * act * lip_pre + lip_pre;
    } else if (net.has_skip_into(j) && net.skip == SkipKind::dense_concat) {
      lip_pre = norm * std::sqrt(act * act + 1.0) * lip_pre;
    } else {
      lip_pre = norm * act * lip_pre;
    }
  }
  return net.activate_output ? lip_pre * act : lip_pre;
}

void save_network(std::ostream& os, const Network& net) {
  net.validate();
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kNetworkFormatVersion);
  put_u32(os, static_cast<std::uint32_t>(net.shape.size()));
  for (int w : net.shape) put_i32(os, w);
  put_u8(os, static_cast<std::uint8_t>(net.activation));
  put_f64(os, net.slope);
  put_u8(os, static_cast<std::uint8_t>(net.skip));
  put_u8(os, net.activate_output ? 1 : 0);
  put_u8(os, net.conditioning ? 1 : 0);
  if (net.conditioning) {
    put_i32(os, net.conditioning->encoding_dim);
    put_u32(os, static_cast<std::uint32_t>(net.conditioning->mlp_shape.size()));
    for (int w : net.conditioning->mlp_shape) put_i32(os, w);
    put_u8(os, net.conditioning->condition_output_layer ? 1 : 0);
  }
  for (const auto& l : net.layers) {
    put_matrix(os, l.weight);
    put_matrix(os, l.bias);
  }
  for (const auto& l : net.embed_layers) {
    put_matrix(os, l.weight);
    put_matrix(os, l.bias);
  }
  if (!os) throw ConfigError("save_network: write failed");
}

Network load_network(std::istream& is) {
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw ConfigError("load_network: not a network container");
  const std::uint32_t version = get_u32(is);
  if (version != kNetworkFormatVersion) {
    throw ConfigError("load_network: unsupported format version " + std::to_string(version));
  }
  Network net;
  const std::uint32_t n_shape = get_u32(is);
  if (n_shape < 2 || n_shape > 4096) throw ConfigError("load_network: bad shape length");
  for (std::uint32_t i = 0; i < n_shape; ++i) net.shape.push_back(get_i32(is));
  const std::uint8_t act = get_u8(is);
  if (act > 2) throw ConfigError("load_network: bad activation tag");
  net.activation = static_cast<Activation>(act);
  net.slope = get_f64(is);
  const std::uint8_t skip = get_u8(is);
  if (skip > 2) throw ConfigError("load_network: bad skip tag");
  net.skip = static_cast<SkipKind>(skip);
  net.activate_output = get_u8(is) != 0;
  if (get_u8(is) != 0) {
    NoiseEmbedding emb;
    emb.encoding_dim = get_i32(is);
    const std::uint32_t n = get_u32(is);
    if (n > 4096) throw ConfigError("load_network: bad embedding shape");
    emb.mlp_shape.clear();
    for (std::uint32_t i = 0; i < n; ++i) emb.mlp_shape.push_back(get_i32(is));
    emb.condition_output_layer = get_u8(is) != 0;
    net.conditioning = emb;
  }
  net.layers.resize(net.shape.size() - 1);
  for (auto& l : net.layers) {
    l.weight = get_matrix(is);
    l.bias = get_matrix(is);
  }
  if (net.conditioning) {
    net.embed_layers.resize(net.conditioning->mlp_shape.size() - 1);
    for (auto& l : net.embed_layers) {
      l.weight = get_matrix(is);
      l.bias = get_matrix(is);
    }
  }
  net.validate();
  return net;
}

}  // namespace pflab::nn
