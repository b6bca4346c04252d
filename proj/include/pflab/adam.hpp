#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pflab/network.hpp"

namespace pflab::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step_count = 0;
};

/// Zero moments shaped like `params`.
AdamState make_adam_state(std::span<const ConstParamRef> params, const AdamConfig& config = {});
AdamState make_adam_state(const Network& net, const AdamConfig& config = {});

/// One bias-corrected Adam update. Throws TrainingError naming the parameter
/// path if any gradient entry is non-finite; parameters are left untouched
/// in that case.
void adam_step(std::span<const ParamRef> params, std::span<const Matrix> grads, AdamState& state);
void adam_step(Network& net, std::span<const Matrix> grads, AdamState& state);

}  // namespace pflab::nn
