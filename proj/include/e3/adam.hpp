// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "e3/tensor.hpp"

namespace e3 {

struct AdamConfig {
  float lr = 5e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected ADAM state over a fixed parameter list. Moment buffers are
// allocated on first use and stay parallel to the parameter order.
struct AdamState {
  AdamConfig cfg;
  std::int64_t t = 0;
  struct Moments {
    std::vector<float> m, v;
  };
  std::vector<Moments> slots;
};

// One optimizer step; reads each parameter's grad (missing grads count as
// zero) and updates values in place. Increments state.t by exactly 1.
void adam_step(std::vector<Tensor>& params, AdamState& state);

}  // namespace e3
