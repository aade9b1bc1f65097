// SPDX-License-Identifier: Apache-2.0
#include "e3/adam.hpp"

#include <cmath>

#include "e3/errors.hpp"

namespace e3 {

void adam_step(std::vector<Tensor>& params, AdamState& state) {
  if (state.slots.empty()) {
    state.slots.resize(params.size());
  } else if (state.slots.size() != params.size()) {
    throw ContractError("adam_step: parameter list changed size");
  }
  state.t += 1;
  const float b1 = state.cfg.beta1;
  const float b2 = state.cfg.beta2;
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(state.t));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    AdamState::Moments& mom = state.slots[p];
    const std::size_t n = static_cast<std::size_t>(param.size());
    if (mom.m.size() != n) {
      mom.m.assign(n, 0.0f);
      mom.v.assign(n, 0.0f);
    }
    param.ensure_grad();
    const float* g = param.grad();
    float* w = param.data();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = g[i];
      mom.m[i] = b1 * mom.m[i] + (1.0f - b1) * gi;
      mom.v[i] = b2 * mom.v[i] + (1.0f - b2) * gi * gi;
      const float mhat = mom.m[i] / bc1;
      const float vhat = mom.v[i] / bc2;
      w[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
  }
}

}  // namespace e3
