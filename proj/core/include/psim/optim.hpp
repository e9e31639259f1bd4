#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "psim/tensor.hpp"

namespace psim {

/// Adam moments and hyperparameters. Moments are created lazily on the first
/// step so one state can follow any parameter list of fixed shape.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

/// One bias-corrected Adam update of every parameter from its current
/// gradient, then clears the gradients. Throws ArgumentError when a gradient
/// is missing or mis-shaped.
void adam_step(std::span<Parameter* const> params, AdamState& state);

}  // namespace psim
