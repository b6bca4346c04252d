#pragma once

// Random networks checked against central differences in every parameter and
// every input entry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pflab/network.hpp"
#include "pflab/rng.hpp"

namespace testsupport {

using pflab::nn::Matrix;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

inline double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

/// Random shape (1 input, 1 to 4 hidden layers of width 2..9, 1 output) with
/// the given skip kind. Conditioned on the noise level when `conditioned`.
inline pflab::nn::Network random_network(std::uint64_t seed, pflab::nn::SkipKind skip, bool conditioned) {
  pflab::Rng rng(seed);
  std::vector<int> shape = {1};
  const int hidden = 1 + static_cast<int>(rng.below(4));
  const int width = 2 + static_cast<int>(rng.below(8));
  for (int i = 0; i < hidden; ++i) {
    // Residual skips need equal widths.
    shape.push_back(skip == pflab::nn::SkipKind::residual ? width : 2 + static_cast<int>(rng.below(8)));
  }
  shape.push_back(1);
  pflab::nn::MlpOptions opt;
  opt.slope = 0.2;
  if (conditioned) {
    pflab::nn::NoiseEmbedding emb;
    emb.encoding_dim = 4;
    emb.mlp_shape = {4, 5, 3};
    emb.condition_output_layer = rng.below(2) == 1;
    opt.conditioning = emb;
  }
  const auto act = rng.below(2) ? pflab::nn::Activation::silu : pflab::nn::Activation::leaky_relu;
  auto net = pflab::nn::build_mlp(shape, act, skip, rng.next(), opt);
  // Non-zero biases so that every bias gradient is exercised.
  for (auto& layer : net.layers) {
    for (Eigen::Index j = 0; j < layer.bias.size(); ++j) layer.bias(0, j) = 0.1 * rng.normal();
  }
  return net;
}

/// Loss sum(R .* net(x)) on a batch of `batch` inputs.
inline GradCheckResult check_network_gradients(pflab::nn::Network net, std::uint64_t seed, int batch = 4,
                                               double h = 1e-6) {
  pflab::Rng rng(seed);
  Matrix x(batch, 1), weights(batch, 1);
  for (int i = 0; i < batch; ++i) {
    x(i, 0) = 1.5 * rng.normal();
    weights(i, 0) = rng.normal();
  }
  const bool conditioned = net.conditioning.has_value();
  std::vector<double> sigmas;
  if (conditioned) {
    for (int i = 0; i < batch; ++i) sigmas.push_back(std::exp(rng.normal()));
  }
  auto loss = [&](const pflab::nn::Network& n, const Matrix& in) {
    return (pflab::nn::evaluate(n, in, sigmas).array() * weights.array()).sum();
  };

  pflab::nn::Graph g;
  auto bound = pflab::nn::bind(g, net);
  auto input = g.variable(x);
  auto out = pflab::nn::apply(bound, input, sigmas);
  g.backward(g.sum(g.mul(out, g.constant(weights))));
  const auto grads = pflab::nn::collect_gradients(g, bound);
  const Matrix input_grad = g.grad(input);

  GradCheckResult res;
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k].value;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + h;
      const double fp = loss(net, x);
      p.data()[i] = saved - h;
      const double fm = loss(net, x);
      p.data()[i] = saved;
      res.max_rel_error = std::max(res.max_rel_error, rel_error(grads[k].data()[i], (fp - fm) / (2 * h)));
      ++res.entries;
    }
  }
  for (int i = 0; i < batch; ++i) {
    Matrix xp = x, xm = x;
    xp(i, 0) += h;
    xm(i, 0) -= h;
    res.max_rel_error = std::max(res.max_rel_error, rel_error(input_grad(i, 0), (loss(net, xp) - loss(net, xm)) / (2 * h)));
    ++res.entries;
  }
  return res;
}

}  // namespace testsupport
