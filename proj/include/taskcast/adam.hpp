#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "taskcast/tensor.hpp"

namespace taskcast {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step_count = 0;

  // Zero moments shaped like `params`.
  static AdamState for_params(std::span<const Matrix* const> params, AdamConfig config = {});
};

// One bias-corrected Adam update of every tensor in `params`.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state);

// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before scaling. max_norm <= 0 disables clipping.
double clip_global_norm(std::span<Matrix* const> grads, double max_norm);

}  // namespace taskcast
