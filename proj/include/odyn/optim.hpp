#pragma once

#include <cstdint>
#include <vector>

#include "odyn/layers.hpp"

namespace odyn::tensor {

struct AdamOptions {
  real learning_rate = real(1e-3);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real epsilon = real(1e-8);
};

/// First and second moment estimates, one entry per parameter, in the order
/// of the parameter list they were created for.
struct AdamState {
  std::vector<std::vector<real>> first;
  std::vector<std::vector<real>> second;
  std::uint64_t step = 0;

  static AdamState for_parameters(const std::vector<NamedTensor>& params);
};

/// One bias-corrected Adam update. Parameters that received no gradient are
/// treated as having a zero gradient. Throws NumericError naming the first
/// parameter whose gradient is not finite; nothing is updated in that case.
void adam_step(std::vector<NamedTensor>& params, AdamState& state, const AdamOptions& options);

void zero_grad(std::vector<NamedTensor>& params);

}  // namespace odyn::tensor
