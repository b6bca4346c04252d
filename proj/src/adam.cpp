#include "pflab/adam.hpp"

#include <cmath>
#include <string>

#include "pflab/errors.hpp"

namespace pflab::nn {

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("Adam: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("Adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam: beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("Adam: eps must be positive");
}

AdamState make_adam_state(std::span<const ConstParamRef> params, const AdamConfig& config) {
  config.validate();
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    state.second_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
  return state;
}

AdamState make_adam_state(const Network& net, const AdamConfig& config) {
  const auto params = net.parameters();
  return make_adam_state(std::span<const ConstParamRef>(params), config);
}

void adam_step(std::span<const ParamRef> params, std::span<const Matrix> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ConfigError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].value->rows() || g.cols() != params[i].value->cols()) {
      throw ConfigError("adam_step: gradient shape mismatch at " + params[i].path);
    }
    if (!g.allFinite()) throw TrainingError("non-finite gradient at " + params[i].path);
  }
  const AdamConfig& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i].cwiseAbs2();
    Matrix& p = *params[i].value;
    p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps);
  }
}

void adam_step(Network& net, std::span<const Matrix> grads, AdamState& state) {
  const auto params = net.parameters();
  adam_step(std::span<const ParamRef>(params), grads, state);
}

}  // namespace pflab::nn
