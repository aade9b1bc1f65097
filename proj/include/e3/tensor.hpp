// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_map>
#include <vector>

namespace e3 {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);

struct TensorData {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until ensure_grad()
  bool requires_grad = false;
};

// Dense float32 tensor. Copying a Tensor shares storage (handle semantics);
// detached_clone() makes an independent deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(d_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(d_->values.size()); }

  float* data() { return d_->values.data(); }
  const float* data() const { return d_->values.data(); }
  std::vector<float>& values() { return d_->values; }
  const std::vector<float>& values() const { return d_->values; }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }

  // Gradient buffer; allocated lazily, zero-filled.
  void ensure_grad();
  void zero_grad();
  bool has_grad() const { return !d_->grad.empty(); }
  float* grad() { return d_->grad.data(); }
  const float* grad() const { return d_->grad.data(); }
  std::vector<float>& grad_values() { return d_->grad; }

  float item() const;

  Tensor detached_clone() const;

  const std::shared_ptr<TensorData>& ptr() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Reverse-mode tape. Constructing a Tape makes it the active recorder for the
// current thread; ops append nodes while any input requires grad. Recording
// order is a valid topological order, so backward() is a reverse replay.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  // Seeds d(loss)/d(loss) = 1 and pulls gradients back through every node
  // recorded up to the loss. Leaf gradients accumulate across repeated calls;
  // intermediate gradients are recomputed fresh each call.
  void backward(const Tensor& loss);

  std::size_t node_count() const { return nodes_.size(); }

  void record(std::shared_ptr<TensorData> out,
              std::function<void(TensorData&)> pull);
  bool produced_here(const TensorData* t) const;

 private:
  struct Node {
    std::shared_ptr<TensorData> out;
    std::function<void(TensorData&)> pull;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const TensorData*, std::size_t> produced_;
  Tape* prev_ = nullptr;
};

// Temporarily disables recording on the active tape (e.g. teacher forward
// passes whose parameters require grad but must not be trained).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();
};

// ---- primitive operations ------------------------------------------------
// All ops participate in the active tape when any input requires grad.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int padding);
Tensor avg_pool2d(const Tensor& x, int window);
Tensor global_avg_pool(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor sigmoid_op(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float c);

// Adds a length-n bias vector to every row of an [m,n] tensor.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);
// Adds a length-c bias to every spatial position of a [b,c,h,w] tensor.
Tensor add_channelwise(const Tensor& x, const Tensor& bias);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Concatenates [m,n_i] tensors along columns into [m, sum(n_i)].
Tensor concat_cols(const std::vector<Tensor>& parts);
// Concatenates 1-D tensors.
Tensor concat_rows(const std::vector<Tensor>& parts);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean over i of w_i * (softplus-stable BCE of logit_i against target t_i).
// Targets may be soft (any value in [0,1]); targets/weights take no gradient.
Tensor bce_with_logits(const Tensor& logits, const std::vector<float>& targets,
                       const std::vector<float>& weights);

// Numerically stable scalar sigmoid (forward only).
float stable_sigmoid(float logit);
// Sigmoid clamped into the open interval (0,1) for reporting scores.
float score_sigmoid(float logit);

}  // namespace e3
