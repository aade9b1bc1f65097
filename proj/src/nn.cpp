// SPDX-License-Identifier: Apache-2.0
#include "e3/nn.hpp"

#include <cmath>

#include "e3/errors.hpp"

namespace e3::nn {

namespace {

Tensor gaussian(Shape shape, float stddev, RngStream& rng) {
  std::vector<float> v(static_cast<std::size_t>(numel(shape)));
  for (float& x : v) x = stddev * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), /*requires_grad=*/true);
}

}  // namespace

Tensor he_normal(Shape shape, int fan_in, RngStream& rng) {
  return gaussian(std::move(shape),
                  std::sqrt(2.0f / static_cast<float>(fan_in)), rng);
}

Tensor xavier_normal(Shape shape, int fan_in, RngStream& rng) {
  return gaussian(std::move(shape),
                  std::sqrt(1.0f / static_cast<float>(fan_in)), rng);
}

Linear Linear::init(int in, int out, RngStream& rng) {
  Linear l;
  l.w = xavier_normal({in, out}, in, rng);
  l.b = Tensor::zeros({out}, /*requires_grad=*/true);
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  return add_rowwise(matmul(x, w), b);
}

Linear Linear::clone() const {
  return Linear{w.detached_clone(), b.detached_clone()};
}

void Linear::collect(std::vector<NamedParam>& out,
                     const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

LayerNormParams LayerNormParams::init(int d) {
  LayerNormParams p;
  p.gamma = Tensor::full({d}, 1.0f, /*requires_grad=*/true);
  p.beta = Tensor::zeros({d}, /*requires_grad=*/true);
  return p;
}

Tensor LayerNormParams::forward(const Tensor& x, float eps) const {
  return layer_norm(x, gamma, beta, eps);
}

LayerNormParams LayerNormParams::clone() const {
  return LayerNormParams{gamma.detached_clone(), beta.detached_clone()};
}

void LayerNormParams::collect(std::vector<NamedParam>& out,
                              const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

TransformerLayer TransformerLayer::init(int d, int heads, int ff_width,
                                        RngStream& rng) {
  if (heads < 1 || d % heads != 0) {
    throw DimensionError("transformer: heads must divide model dim");
  }
  TransformerLayer t;
  t.d = d;
  t.heads = heads;
  t.ln1 = LayerNormParams::init(d);
  t.ln2 = LayerNormParams::init(d);
  const int dh = d / heads;
  for (int h = 0; h < heads; ++h) {
    t.wq.push_back(xavier_normal({d, dh}, d, rng));
    t.wk.push_back(xavier_normal({d, dh}, d, rng));
    t.wv.push_back(xavier_normal({d, dh}, d, rng));
  }
  t.wo = xavier_normal({d, d}, d, rng);
  t.ff1 = Linear::init(d, ff_width, rng);
  t.ff2 = Linear::init(ff_width, d, rng);
  return t;
}

Tensor TransformerLayer::forward(const Tensor& x) const {
  Tensor h = ln1.forward(x);
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int i = 0; i < heads; ++i) {
    const std::size_t hi = static_cast<std::size_t>(i);
    Tensor q = matmul(h, wq[hi]);
    Tensor k = matmul(h, wk[hi]);
    Tensor v = matmul(h, wv[hi]);
    head_outs.push_back(softmax_attention(q, k, v));
  }
  Tensor attn = matmul(concat_cols(head_outs), wo);
  Tensor a = add(x, attn);
  Tensor f = ff2.forward(relu(ff1.forward(ln2.forward(a))));
  return add(a, f);
}

TransformerLayer TransformerLayer::clone() const {
  TransformerLayer t;
  t.d = d;
  t.heads = heads;
  t.ln1 = ln1.clone();
  t.ln2 = ln2.clone();
  for (const Tensor& w : wq) t.wq.push_back(w.detached_clone());
  for (const Tensor& w : wk) t.wk.push_back(w.detached_clone());
  for (const Tensor& w : wv) t.wv.push_back(w.detached_clone());
  t.wo = wo.detached_clone();
  t.ff1 = ff1.clone();
  t.ff2 = ff2.clone();
  return t;
}

void TransformerLayer::collect(std::vector<NamedParam>& out,
                               const std::string& prefix) const {
  ln1.collect(out, prefix + ".ln1");
  ln2.collect(out, prefix + ".ln2");
  for (int h = 0; h < heads; ++h) {
    const std::string n = std::to_string(h);
    out.emplace_back(prefix + ".wq" + n, wq[static_cast<std::size_t>(h)]);
    out.emplace_back(prefix + ".wk" + n, wk[static_cast<std::size_t>(h)]);
    out.emplace_back(prefix + ".wv" + n, wv[static_cast<std::size_t>(h)]);
  }
  out.emplace_back(prefix + ".wo", wo);
  ff1.collect(out, prefix + ".ff1");
  ff2.collect(out, prefix + ".ff2");
}

void set_requires_grad(std::vector<NamedParam>& params, bool value) {
  for (auto& [name, t] : params) t.set_requires_grad(value);
}

}  // namespace e3::nn
