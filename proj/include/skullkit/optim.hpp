#pragma once

#include <cstdint>
#include <vector>

#include "skullkit/autodiff.hpp"

namespace skullkit {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  void validate() const;
};

struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<float>> m;  // first-moment estimate per parameter
  std::vector<std::vector<float>> v;  // second-moment estimate per parameter

  static AdamState for_parameters(const std::vector<Var>& params);
};

// One Adam update over all parameters with populated gradients. Parameters
// whose grad buffer was never allocated raise MissingGrad.
void adam_step(std::vector<Var>& params, AdamState& state, const AdamConfig& config);

}  // namespace skullkit
