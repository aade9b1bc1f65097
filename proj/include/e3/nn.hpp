// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "e3/rng.hpp"
#include "e3/tensor.hpp"

namespace e3::nn {

using NamedParam = std::pair<std::string, Tensor>;

// Gaussian init with std = sqrt(2/fan_in) (post-ReLU layers).
Tensor he_normal(Shape shape, int fan_in, RngStream& rng);
// Gaussian init with std = sqrt(1/fan_in) (linear/projection layers).
Tensor xavier_normal(Shape shape, int fan_in, RngStream& rng);

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out]

  static Linear init(int in, int out, RngStream& rng);
  Tensor forward(const Tensor& x) const;
  Linear clone() const;
  void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams init(int d);
  Tensor forward(const Tensor& x, float eps = 1e-5f) const;
  LayerNormParams clone() const;
  void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

// Pre-norm transformer encoder layer: x + MHA(LN(x)), then + FF(LN(.)).
// Multi-head attention uses per-head bias-free projections; FF is
// Linear -> ReLU -> Linear.
struct TransformerLayer {
  int d = 0;
  int heads = 0;
  LayerNormParams ln1, ln2;
  std::vector<Tensor> wq, wk, wv;  // per head, [d, d/heads]
  Tensor wo;                       // [d, d]
  Linear ff1, ff2;

  static TransformerLayer init(int d, int heads, int ff_width, RngStream& rng);
  Tensor forward(const Tensor& x) const;  // [L, d] -> [L, d]
  TransformerLayer clone() const;
  void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

void set_requires_grad(std::vector<NamedParam>& params, bool value);

}  // namespace e3::nn
