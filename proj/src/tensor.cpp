// SPDX-License-Identifier: Apache-2.0
#include "e3/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "e3/errors.hpp"

namespace e3 {

namespace {

thread_local Tape* g_current_tape = nullptr;
thread_local int g_no_grad_depth = 0;

void ensure(TensorData& t) {
  if (t.grad.size() != t.values.size()) t.grad.assign(t.values.size(), 0.0f);
}

using DataPtr = std::shared_ptr<TensorData>;

bool should_record(std::initializer_list<const Tensor*> ins) {
  if (g_no_grad_depth > 0 || g_current_tape == nullptr) return false;
  for (const Tensor* t : ins) {
    if (t->requires_grad()) return true;
  }
  return false;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor dims must be positive");
  }
  auto d = std::make_shared<TensorData>();
  d->values.assign(static_cast<std::size_t>(numel(shape)), value);
  d->shape = std::move(shape);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::from(Shape shape, std::vector<float> values,
                    bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("tensor data length does not match shape");
  }
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

void Tensor::ensure_grad() { ensure(*d_); }

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0f);
}

float Tensor::item() const {
  if (size() != 1) throw ContractError("item(): tensor is not scalar");
  return d_->values[0];
}

Tensor Tensor::detached_clone() const {
  auto d = std::make_shared<TensorData>();
  d->shape = d_->shape;
  d->values = d_->values;
  d->requires_grad = d_->requires_grad;
  return Tensor(std::move(d));
}

// ---- Tape ------------------------------------------------------------------

Tape::Tape() {
  prev_ = g_current_tape;
  g_current_tape = this;
}

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::record(std::shared_ptr<TensorData> out,
                  std::function<void(TensorData&)> pull) {
  produced_[out.get()] = nodes_.size();
  nodes_.push_back(Node{std::move(out), std::move(pull)});
}

bool Tape::produced_here(const TensorData* t) const {
  return produced_.count(t) > 0;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  auto it = produced_.find(loss.ptr().get());
  if (it == produced_.end()) {
    throw ContractError("backward: loss was not produced on this tape");
  }
  const std::size_t last = it->second;
  // Intermediate grads are scratch: recompute them fresh on every call so
  // that repeated backward() calls accumulate only into leaves.
  for (std::size_t i = 0; i <= last; ++i) {
    ensure(*nodes_[i].out);
    std::fill(nodes_[i].out->grad.begin(), nodes_[i].out->grad.end(), 0.0f);
  }
  nodes_[last].out->grad[0] = 1.0f;
  for (std::size_t i = last + 1; i-- > 0;) {
    nodes_[i].pull(*nodes_[i].out);
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool NoGradGuard::active() { return g_no_grad_depth > 0; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw DimensionError("matmul: expects 2-D operands");
  }
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw DimensionError("matmul: inner dims disagree " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  {
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        const float av = pa[i * k + p];
        const float* brow = pb + p * n;
        float* orow = po + i * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    DataPtr pa = a.ptr(), pb = b.ptr();
    Tape::current()->record(out.ptr(), [pa, pb, m, k, n](TensorData& o) {
      const float* go = o.grad.data();
      if (pa->requires_grad) {
        ensure(*pa);
        float* da = pa->grad.data();
        const float* vb = pb->values.data();
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const float* brow = vb + p * n;
            const float* grow = go + i * n;
            float acc = 0.0f;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[i * k + p] += acc;
          }
        }
      }
      if (pb->requires_grad) {
        ensure(*pb);
        float* db = pb->grad.data();
        const float* va = pa->values.data();
        for (int i = 0; i < m; ++i) {
          for (int p = 0; p < k; ++p) {
            const float av = va[i * k + p];
            const float* grow = go + i * n;
            float* drow = db + p * n;
            for (int j = 0; j < n; ++j) drow[j] += av * grow[j];
          }
        }
      }
    });
  }
  return out;
}

namespace {

struct ConvGeom {
  int bsz, cin, h, w, cout, kh, kw, oh, ow, stride, pad;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& k, int stride, int pad) {
  if (x.ndim() != 4 || k.ndim() != 4) {
    throw DimensionError("conv2d: expects 4-D input and kernel");
  }
  if (stride < 1 || pad < 0) throw DimensionError("conv2d: bad stride/padding");
  ConvGeom g{};
  g.bsz = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = k.dim(0);
  g.kh = k.dim(2);
  g.kw = k.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (k.dim(1) != g.cin) {
    throw DimensionError("conv2d: kernel channel count does not match input");
  }
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  const int sh = g.h + 2 * pad - g.kh;
  const int sw = g.w + 2 * pad - g.kw;
  if (sh % stride != 0 || sw % stride != 0) {
    throw DimensionError("conv2d: stride does not divide padded geometry");
  }
  g.oh = sh / stride + 1;
  g.ow = sw / stride + 1;
  return g;
}

// Valid output-column range for a given kernel column: stride*j - pad + kc in [0, w)
inline void col_range(int ow, int stride, int pad, int kc, int w, int& jlo,
                      int& jhi) {
  jlo = 0;
  while (jlo < ow && jlo * stride - pad + kc < 0) ++jlo;
  jhi = ow - 1;
  while (jhi >= 0 && jhi * stride - pad + kc >= w) --jhi;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding) {
  const ConvGeom g = conv_geometry(x, k, stride, padding);
  Tensor out = Tensor::zeros({g.bsz, g.cout, g.oh, g.ow});
  {
    const float* px = x.data();
    const float* pk = k.data();
    float* po = out.data();
    for (int b = 0; b < g.bsz; ++b) {
      for (int oc = 0; oc < g.cout; ++oc) {
        float* obase = po + (static_cast<std::size_t>(b) * g.cout + oc) * g.oh * g.ow;
        for (int ic = 0; ic < g.cin; ++ic) {
          const float* xbase =
              px + (static_cast<std::size_t>(b) * g.cin + ic) * g.h * g.w;
          const float* kbase =
              pk + (static_cast<std::size_t>(oc) * g.cin + ic) * g.kh * g.kw;
          for (int kr = 0; kr < g.kh; ++kr) {
            for (int kc = 0; kc < g.kw; ++kc) {
              const float wv = kbase[kr * g.kw + kc];
              int jlo, jhi;
              col_range(g.ow, g.stride, g.pad, kc, g.w, jlo, jhi);
              for (int oy = 0; oy < g.oh; ++oy) {
                const int iy = oy * g.stride - g.pad + kr;
                if (iy < 0 || iy >= g.h) continue;
                const float* xrow = xbase + iy * g.w;
                float* orow = obase + oy * g.ow;
                for (int j = jlo; j <= jhi; ++j) {
                  orow[j] += wv * xrow[j * g.stride - g.pad + kc];
                }
              }
            }
          }
        }
      }
    }
  }
  if (should_record({&x, &k})) {
    out.set_requires_grad(true);
    DataPtr px = x.ptr(), pk = k.ptr();
    Tape::current()->record(out.ptr(), [px, pk, g](TensorData& o) {
      const float* go = o.grad.data();
      const bool need_dx = px->requires_grad;
      const bool need_dk = pk->requires_grad;
      if (need_dx) ensure(*px);
      if (need_dk) ensure(*pk);
      for (int b = 0; b < g.bsz; ++b) {
        for (int oc = 0; oc < g.cout; ++oc) {
          const float* gbase =
              go + (static_cast<std::size_t>(b) * g.cout + oc) * g.oh * g.ow;
          for (int ic = 0; ic < g.cin; ++ic) {
            const std::size_t xoff =
                (static_cast<std::size_t>(b) * g.cin + ic) * g.h * g.w;
            const std::size_t koff =
                (static_cast<std::size_t>(oc) * g.cin + ic) * g.kh * g.kw;
            for (int kr = 0; kr < g.kh; ++kr) {
              for (int kc = 0; kc < g.kw; ++kc) {
                int jlo, jhi;
                col_range(g.ow, g.stride, g.pad, kc, g.w, jlo, jhi);
                const float wv = pk->values[koff + kr * g.kw + kc];
                float kacc = 0.0f;
                for (int oy = 0; oy < g.oh; ++oy) {
                  const int iy = oy * g.stride - g.pad + kr;
                  if (iy < 0 || iy >= g.h) continue;
                  const float* grow = gbase + oy * g.ow;
                  const float* xrow = px->values.data() + xoff + iy * g.w;
                  float* dxrow =
                      need_dx ? px->grad.data() + xoff + iy * g.w : nullptr;
                  for (int j = jlo; j <= jhi; ++j) {
                    const int ix = j * g.stride - g.pad + kc;
                    const float gv = grow[j];
                    if (need_dx) dxrow[ix] += wv * gv;
                    kacc += xrow[ix] * gv;
                  }
                }
                if (need_dk) pk->grad[koff + kr * g.kw + kc] += kacc;
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor avg_pool2d(const Tensor& x, int window) {
  if (x.ndim() != 4) throw DimensionError("avg_pool2d: expects 4-D input");
  if (window < 1) throw DimensionError("avg_pool2d: bad window");
  const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % window != 0 || w % window != 0) {
    throw DimensionError("avg_pool2d: window does not divide spatial dims");
  }
  const int oh = h / window, ow = w / window;
  const float inv = 1.0f / static_cast<float>(window * window);
  Tensor out = Tensor::zeros({bsz, c, oh, ow});
  {
    const float* px = x.data();
    float* po = out.data();
    for (int bc = 0; bc < bsz * c; ++bc) {
      const float* xplane = px + static_cast<std::size_t>(bc) * h * w;
      float* oplane = po + static_cast<std::size_t>(bc) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          float acc = 0.0f;
          for (int dy = 0; dy < window; ++dy) {
            const float* row = xplane + (oy * window + dy) * w + ox * window;
            for (int dx = 0; dx < window; ++dx) acc += row[dx];
          }
          oplane[oy * ow + ox] = acc * inv;
        }
      }
    }
  }
  if (should_record({&x})) {
    out.set_requires_grad(true);
    DataPtr px = x.ptr();
    const int n_planes = bsz * c;
    Tape::current()->record(
        out.ptr(), [px, n_planes, h, w, oh, ow, window, inv](TensorData& o) {
          ensure(*px);
          const float* go = o.grad.data();
          float* dx = px->grad.data();
          for (int bc = 0; bc < n_planes; ++bc) {
            const float* gplane = go + static_cast<std::size_t>(bc) * oh * ow;
            float* dplane = dx + static_cast<std::size_t>(bc) * h * w;
            for (int oy = 0; oy < oh; ++oy) {
              for (int ox = 0; ox < ow; ++ox) {
                const float gv = gplane[oy * ow + ox] * inv;
                for (int dy = 0; dy < window; ++dy) {
                  float* row = dplane + (oy * window + dy) * w + ox * window;
                  for (int dxi = 0; dxi < window; ++dxi) row[dxi] += gv;
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 4) throw DimensionError("global_avg_pool: expects 4-D input");
  const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int hw = h * w;
  const float inv = 1.0f / static_cast<float>(hw);
  Tensor out = Tensor::zeros({bsz, c});
  {
    const float* px = x.data();
    float* po = out.data();
    for (int bc = 0; bc < bsz * c; ++bc) {
      const float* plane = px + static_cast<std::size_t>(bc) * hw;
      float acc = 0.0f;
      for (int i = 0; i < hw; ++i) acc += plane[i];
      po[bc] = acc * inv;
    }
  }
  if (should_record({&x})) {
    out.set_requires_grad(true);
    DataPtr px = x.ptr();
    const int n_planes = bsz * c;
    Tape::current()->record(out.ptr(), [px, n_planes, hw, inv](TensorData& o) {
      ensure(*px);
      float* dx = px->grad.data();
      for (int bc = 0; bc < n_planes; ++bc) {
        const float gv = o.grad[static_cast<std::size_t>(bc)] * inv;
        float* plane = dx + static_cast<std::size_t>(bc) * hw;
        for (int i = 0; i < hw; ++i) plane[i] += gv;
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = static_cast<std::size_t>(x.size());
  const float* px = x.data();
  float* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = px[i] > 0.0f ? px[i] : 0.0f;
  if (should_record({&x})) {
    out.set_requires_grad(true);
    DataPtr pin = x.ptr();
    Tape::current()->record(out.ptr(), [pin, n](TensorData& o) {
      ensure(*pin);
      for (std::size_t i = 0; i < n; ++i) {
        if (pin->values[i] > 0.0f) pin->grad[i] += o.grad[i];
      }
    });
  }
  return out;
}

Tensor sigmoid_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = static_cast<std::size_t>(x.size());
  const float* px = x.data();
  float* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = stable_sigmoid(px[i]);
  if (should_record({&x})) {
    out.set_requires_grad(true);
    DataPtr pin = x.ptr();
    Tape::current()->record(out.ptr(), [pin, n](TensorData& o) {
      ensure(*pin);
      for (std::size_t i = 0; i < n; ++i) {
        const float s = o.values[i];
        pin->grad[i] += o.grad[i] * s * (1.0f - s);
      }
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_pointwise(const Tensor& a, const Tensor& b, const char* name,
                        Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = static_cast<std::size_t>(a.size());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  if (should_record({&a, &b})) {
    out.set_requires_grad(true);
    DataPtr da = a.ptr(), db = b.ptr();
    Tape::current()->record(out.ptr(), [da, db, n, bwd](TensorData& o) {
      const bool ga = da->requires_grad, gb = db->requires_grad;
      if (ga) ensure(*da);
      if (gb) ensure(*db);
      for (std::size_t i = 0; i < n; ++i) {
        bwd(o.grad[i], da->values[i], db->values[i],
            ga ? &da->grad[i] : nullptr, gb ? &db->grad[i] : nullptr);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "add", [](float x, float y) { return x + y; },
      [](float g, float, float, float* ga, float* gb) {
        if (ga) *ga += g;
        if (gb) *gb += g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "sub", [](float x, float y) { return x - y; },
      [](float g, float, float, float* ga, float* gb) {
        if (ga) *ga += g;
        if (gb) *gb -= g;
      });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  return binary_pointwise(
      a, b, "hadamard", [](float x, float y) { return x * y; },
      [](float g, float x, float y, float* ga, float* gb) {
        if (ga) *ga += g * y;
        if (gb) *gb += g * x;
      });
}

Tensor scale(const Tensor& x, float c) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = static_cast<std::size_t>(x.size());
  const float* px = x.data();
  float* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = px[i] * c;
  if (should_record({&x})) {
    out.set_requires_grad(true);
    DataPtr pin = x.ptr();
    Tape::current()->record(out.ptr(), [pin, n, c](TensorData& o) {
      ensure(*pin);
      for (std::size_t i = 0; i < n; ++i) pin->grad[i] += o.grad[i] * c;
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_rowwise: expects [m,n] and [n]");
  }
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  {
    const float* px = x.data();
    const float* pbv = bias.data();
    float* po = out.data();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) po[i * n + j] = px[i * n + j] + pbv[j];
    }
  }
  if (should_record({&x, &bias})) {
    out.set_requires_grad(true);
    DataPtr px = x.ptr(), pb = bias.ptr();
    Tape::current()->record(out.ptr(), [px, pb, m, n](TensorData& o) {
      if (px->requires_grad) {
        ensure(*px);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          px->grad[i] += o.grad[i];
        }
      }
      if (pb->requires_grad) {
        ensure(*pb);
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) pb->grad[j] += o.grad[i * n + j];
        }
      }
    });
  }
  return out;
}

Tensor add_channelwise(const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 4 || bias.ndim() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_channelwise: expects [b,c,h,w] and [c]");
  }
  const int bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape());
  {
    const float* px = x.data();
    const float* pbv = bias.data();
    float* po = out.data();
    for (int b = 0; b < bsz; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const float bv = pbv[ch];
        const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
        for (int i = 0; i < hw; ++i) po[off + i] = px[off + i] + bv;
      }
    }
  }
  if (should_record({&x, &bias})) {
    out.set_requires_grad(true);
    DataPtr px = x.ptr(), pb = bias.ptr();
    Tape::current()->record(out.ptr(), [px, pb, bsz, c, hw](TensorData& o) {
      if (px->requires_grad) {
        ensure(*px);
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
          px->grad[i] += o.grad[i];
        }
      }
      if (pb->requires_grad) {
        ensure(*pb);
        for (int b = 0; b < bsz; ++b) {
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * hw;
            float acc = 0.0f;
            for (int i = 0; i < hw; ++i) acc += o.grad[off + i];
            pb->grad[ch] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps) {
  if (x.ndim() < 1) throw DimensionError("layer_norm: empty shape");
  const int d = x.dim(x.ndim() - 1);
  if (gamma.ndim() != 1 || gamma.dim(0) != d || beta.ndim() != 1 ||
      beta.dim(0) != d) {
    throw DimensionError("layer_norm: gamma/beta must have shape [d]");
  }
  const int rows = static_cast<int>(x.size() / d);
  Tensor out = Tensor::zeros(x.shape());
  std::vector<float> xhat(static_cast<std::size_t>(x.size()));
  std::vector<float> inv_std(static_cast<std::size_t>(rows));
  {
    const float* px = x.data();
    const float* pg = gamma.data();
    const float* pbv = beta.data();
    float* po = out.data();
    for (int r = 0; r < rows; ++r) {
      const float* row = px + static_cast<std::size_t>(r) * d;
      float mu = 0.0f;
      for (int j = 0; j < d; ++j) mu += row[j];
      mu /= static_cast<float>(d);
      float var = 0.0f;
      for (int j = 0; j < d; ++j) {
        const float c = row[j] - mu;
        var += c * c;
      }
      var /= static_cast<float>(d);
      const float inv = 1.0f / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(r)] = inv;
      for (int j = 0; j < d; ++j) {
        const float h = (row[j] - mu) * inv;
        xhat[static_cast<std::size_t>(r) * d + j] = h;
        po[static_cast<std::size_t>(r) * d + j] = pg[j] * h + pbv[j];
      }
    }
  }
  if (should_record({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    DataPtr px = x.ptr(), pg = gamma.ptr(), pb = beta.ptr();
    Tape::current()->record(
        out.ptr(), [px, pg, pb, rows, d, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](TensorData& o) {
          const float* go = o.grad.data();
          if (pg->requires_grad) {
            ensure(*pg);
            for (int r = 0; r < rows; ++r) {
              for (int j = 0; j < d; ++j) {
                pg->grad[j] += go[static_cast<std::size_t>(r) * d + j] *
                               xhat[static_cast<std::size_t>(r) * d + j];
              }
            }
          }
          if (pb->requires_grad) {
            ensure(*pb);
            for (int r = 0; r < rows; ++r) {
              for (int j = 0; j < d; ++j) {
                pb->grad[j] += go[static_cast<std::size_t>(r) * d + j];
              }
            }
          }
          if (px->requires_grad) {
            ensure(*px);
            const float invd = 1.0f / static_cast<float>(d);
            for (int r = 0; r < rows; ++r) {
              const std::size_t off = static_cast<std::size_t>(r) * d;
              float mean_dh = 0.0f, mean_dh_h = 0.0f;
              for (int j = 0; j < d; ++j) {
                const float dh = go[off + j] * pg->values[j];
                mean_dh += dh;
                mean_dh_h += dh * xhat[off + j];
              }
              mean_dh *= invd;
              mean_dh_h *= invd;
              const float inv = inv_std[static_cast<std::size_t>(r)];
              for (int j = 0; j < d; ++j) {
                const float dh = go[off + j] * pg->values[j];
                px->grad[off + j] +=
                    inv * (dh - mean_dh - xhat[off + j] * mean_dh_h);
              }
            }
          }
        });
  }
  return out;
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2) {
    throw DimensionError("softmax_attention: expects 2-D q,k,v");
  }
  const int L = q.dim(0), d = q.dim(1);
  if (k.dim(0) != L || k.dim(1) != d || v.dim(0) != L || v.dim(1) != d) {
    throw DimensionError("softmax_attention: q,k,v shapes must match");
  }
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));
  std::vector<float> attn(static_cast<std::size_t>(L) * L);
  Tensor out = Tensor::zeros({L, d});
  {
    const float* pq = q.data();
    const float* pk = k.data();
    const float* pv = v.data();
    float* po = out.data();
    for (int i = 0; i < L; ++i) {
      float* arow = attn.data() + static_cast<std::size_t>(i) * L;
      float mx = -std::numeric_limits<float>::infinity();
      for (int j = 0; j < L; ++j) {
        float s = 0.0f;
        for (int c = 0; c < d; ++c) s += pq[i * d + c] * pk[j * d + c];
        arow[j] = s * inv_sqrt_d;
        mx = std::max(mx, arow[j]);
      }
      float z = 0.0f;
      for (int j = 0; j < L; ++j) {
        arow[j] = std::exp(arow[j] - mx);
        z += arow[j];
      }
      const float invz = 1.0f / z;
      for (int j = 0; j < L; ++j) arow[j] *= invz;
      for (int j = 0; j < L; ++j) {
        const float a = arow[j];
        for (int c = 0; c < d; ++c) po[i * d + c] += a * pv[j * d + c];
      }
    }
  }
  if (should_record({&q, &k, &v})) {
    out.set_requires_grad(true);
    DataPtr pq = q.ptr(), pk = k.ptr(), pv = v.ptr();
    Tape::current()->record(
        out.ptr(),
        [pq, pk, pv, L, d, inv_sqrt_d, attn = std::move(attn)](TensorData& o) {
          const float* go = o.grad.data();
          std::vector<float> ds(static_cast<std::size_t>(L) * L, 0.0f);
          for (int i = 0; i < L; ++i) {
            const float* arow = attn.data() + static_cast<std::size_t>(i) * L;
            float* drow = ds.data() + static_cast<std::size_t>(i) * L;
            float dot = 0.0f;
            for (int j = 0; j < L; ++j) {
              float da = 0.0f;
              for (int c = 0; c < d; ++c) {
                da += go[i * d + c] * pv->values[j * d + c];
              }
              drow[j] = da;
              dot += arow[j] * da;
            }
            for (int j = 0; j < L; ++j) {
              drow[j] = arow[j] * (drow[j] - dot) * inv_sqrt_d;
            }
          }
          if (pv->requires_grad) {
            ensure(*pv);
            for (int j = 0; j < L; ++j) {
              for (int i = 0; i < L; ++i) {
                const float a = attn[static_cast<std::size_t>(i) * L + j];
                for (int c = 0; c < d; ++c) {
                  pv->grad[j * d + c] += a * go[i * d + c];
                }
              }
            }
          }
          if (pq->requires_grad) {
            ensure(*pq);
            for (int i = 0; i < L; ++i) {
              for (int j = 0; j < L; ++j) {
                const float s = ds[static_cast<std::size_t>(i) * L + j];
                for (int c = 0; c < d; ++c) {
                  pq->grad[i * d + c] += s * pk->values[j * d + c];
                }
              }
            }
          }
          if (pk->requires_grad) {
            ensure(*pk);
            for (int i = 0; i < L; ++i) {
              for (int j = 0; j < L; ++j) {
                const float s = ds[static_cast<std::size_t>(i) * L + j];
                for (int c = 0; c < d; ++c) {
                  pk->grad[j * d + c] += s * pq->values[i * d + c];
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input");
  const int m = parts[0].dim(0);
  int total = 0;
  for (const Tensor& t : parts) {
    if (t.ndim() != 2 || t.dim(0) != m) {
      throw DimensionError("concat_cols: row counts must match");
    }
    total += t.dim(1);
  }
  Tensor out = Tensor::zeros({m, total});
  {
    float* po = out.data();
    int col = 0;
    for (const Tensor& t : parts) {
      const int n = t.dim(1);
      const float* pt = t.data();
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) po[i * total + col + j] = pt[i * n + j];
      }
      col += n;
    }
  }
  bool rec = false;
  for (const Tensor& t : parts) {
    rec = rec || should_record({&t});
  }
  if (rec) {
    out.set_requires_grad(true);
    std::vector<DataPtr> ins;
    std::vector<int> widths;
    for (const Tensor& t : parts) {
      ins.push_back(t.ptr());
      widths.push_back(t.dim(1));
    }
    Tape::current()->record(out.ptr(), [ins, widths, m, total](TensorData& o) {
      int col = 0;
      for (std::size_t p = 0; p < ins.size(); ++p) {
        const int n = widths[p];
        if (ins[p]->requires_grad) {
          ensure(*ins[p]);
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
              ins[p]->grad[i * n + j] += o.grad[i * total + col + j];
            }
          }
        }
        col += n;
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty input");
  int total = 0;
  for (const Tensor& t : parts) {
    if (t.ndim() != 1) throw DimensionError("concat_rows: expects 1-D parts");
    total += t.dim(0);
  }
  Tensor out = Tensor::zeros({total});
  {
    float* po = out.data();
    int off = 0;
    for (const Tensor& t : parts) {
      for (int i = 0; i < t.dim(0); ++i) po[off + i] = t.data()[i];
      off += t.dim(0);
    }
  }
  bool rec = false;
  for (const Tensor& t : parts) {
    rec = rec || should_record({&t});
  }
  if (rec) {
    out.set_requires_grad(true);
    std::vector<DataPtr> ins;
    for (const Tensor& t : parts) ins.push_back(t.ptr());
    Tape::current()->record(out.ptr(), [ins](TensorData& o) {
      int off = 0;
      for (const DataPtr& in : ins) {
        const int n = static_cast<int>(in->values.size());
        if (in->requires_grad) {
          ensure(*in);
          for (int i = 0; i < n; ++i) in->grad[i] += o.grad[off + i];
        }
        off += n;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size()) {
    throw DimensionError("reshape: element count mismatch");
  }
  Tensor out = Tensor::from(std::move(new_shape), x.values());
  if (should_record({&x})) {
    out.set_requires_grad(true);
    DataPtr pin = x.ptr();
    Tape::current()->record(out.ptr(), [pin](TensorData& o) {
      ensure(*pin);
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        pin->grad[i] += o.grad[i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  float acc = 0.0f;
  const float* px = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) acc += px[i];
  Tensor out = Tensor::scalar(acc);
  if (should_record({&x})) {
    out.set_requires_grad(true);
    DataPtr pin = x.ptr();
    Tape::current()->record(out.ptr(), [pin](TensorData& o) {
      ensure(*pin);
      const float g = o.grad[0];
      for (std::size_t i = 0; i < pin->grad.size(); ++i) pin->grad[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0f / static_cast<float>(x.size()));
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<float>& targets,
                       const std::vector<float>& weights) {
  if (logits.ndim() != 1) throw DimensionError("bce_with_logits: 1-D logits");
  const std::size_t n = static_cast<std::size_t>(logits.size());
  if (targets.size() != n || weights.size() != n) {
    throw ContractError("bce_with_logits: targets/weights length mismatch");
  }
  const float* pl = logits.data();
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) {
    const float z = pl[i];
    const float term = std::max(z, 0.0f) - z * targets[i] +
                       std::log1p(std::exp(-std::fabs(z)));
    acc += weights[i] * term;
  }
  const float invn = 1.0f / static_cast<float>(n);
  Tensor out = Tensor::scalar(acc * invn);
  if (should_record({&logits})) {
    out.set_requires_grad(true);
    DataPtr pin = logits.ptr();
    Tape::current()->record(out.ptr(),
                            [pin, targets, weights, n, invn](TensorData& o) {
                              ensure(*pin);
                              const float g = o.grad[0] * invn;
                              for (std::size_t i = 0; i < n; ++i) {
                                const float s = stable_sigmoid(pin->values[i]);
                                pin->grad[i] += g * weights[i] * (s - targets[i]);
                              }
                            });
  }
  return out;
}

float stable_sigmoid(float logit) {
  if (logit >= 0.0f) {
    const float e = std::exp(-logit);
    return 1.0f / (1.0f + e);
  }
  const float e = std::exp(logit);
  return e / (1.0f + e);
}

float score_sigmoid(float logit) {
  const float s = stable_sigmoid(logit);
  const float lo = 1e-7f;
  const float hi = 1.0f - 1e-7f;
  return std::min(std::max(s, lo), hi);
}

}  // namespace e3
