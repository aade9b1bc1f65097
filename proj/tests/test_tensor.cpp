// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include <doctest.h>

#include "e3/adam.hpp"
#include "e3/errors.hpp"
#include "e3/rng.hpp"
#include "e3/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace e3;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, bool requires_grad = true,
                     float scale = 1.0f) {
  std::vector<float> v(static_cast<std::size_t>(numel(shape)));
  for (float& x : v) x = scale * (2.0f * rng.next_float() - 1.0f);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("matmul matches hand arithmetic") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  CHECK(c.values() == std::vector<float>{19, 22, 43, 50});
}

TEST_CASE("matmul identity and shape errors") {
  RngStream rng(7, "matmul");
  Tensor a = random_tensor({3, 4}, rng, false);
  Tensor eye = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) eye.data()[i * 4 + i] = 1.0f;
  Tensor c = matmul(a, eye);
  CHECK(c.values() == a.values());
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("gradient of sum(A*B) w.r.t. A matches finite differences") {
  RngStream rng(11, "matmulgrad");
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  auto loss = [&] { return sum(matmul(a, b)); };
  auto report = testing::gradcheck(loss, {a, b});
  CHECK(report.max_rel_err <= 1e-3);
}

TEST_CASE("conv2d identity kernel and constant-image sums") {
  RngStream rng(3, "conv");
  Tensor x = random_tensor({1, 1, 5, 5}, rng, false);
  Tensor k1 = Tensor::from({1, 1, 1, 1}, {1.0f});
  CHECK(conv2d(x, k1, 1, 0).values() == x.values());

  Tensor c = Tensor::full({1, 1, 6, 6}, 0.3f);
  Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor out = conv2d(c, ones, 1, 0);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    CHECK(out.data()[i] == doctest::Approx(9 * 0.3f).epsilon(1e-6));
  }
}

TEST_CASE("conv2d shape rule and stride errors") {
  Tensor x = Tensor::zeros({1, 1, 5, 5});
  Tensor k = Tensor::zeros({4, 1, 3, 3});
  Tensor out = conv2d(x, k, 1, 1);
  CHECK(out.shape() == Shape{1, 4, 5, 5});
  // (5 + 2*1 - 3) = 4 is not divisible by stride 3.
  CHECK_THROWS_AS(conv2d(x, k, 3, 1), DimensionError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({4, 2, 3, 3}), 1, 1),
                  DimensionError);
}

TEST_CASE("conv2d gradients match finite differences") {
  RngStream rng(5, "convgrad");
  Tensor x = random_tensor({2, 2, 6, 6}, rng);
  Tensor k = random_tensor({3, 2, 3, 3}, rng, true, 0.5f);
  auto loss = [&] {
    Tensor y = conv2d(x, k, 1, 1);
    return mean(hadamard(y, sigmoid_op(y)));
  };
  auto report = testing::gradcheck(loss, {x, k});
  CHECK(report.max_rel_err <= 1e-3);

  Tensor k2 = random_tensor({2, 2, 2, 2}, rng, true, 0.5f);
  auto loss2 = [&] { return mean(conv2d(x, k2, 2, 0)); };
  auto report2 = testing::gradcheck(loss2, {x, k2});
  CHECK(report2.max_rel_err <= 1e-3);
}

TEST_CASE("elementwise ops: values and identities") {
  Tensor x = Tensor::from({2}, {-1.0f, 2.0f});
  CHECK(relu(x).values() == std::vector<float>{0.0f, 2.0f});

  Tensor zero = Tensor::scalar(0.0f);
  CHECK(sigmoid_op(zero).item() == doctest::Approx(0.5));

  RngStream rng(9, "elem");
  Tensor a = random_tensor({3, 3}, rng, false);
  Tensor ones = Tensor::full({3, 3}, 1.0f);
  CHECK(hadamard(a, ones).values() == a.values());
  CHECK_THROWS_AS(add(a, Tensor::zeros({2, 2})), DimensionError);
}

TEST_CASE("sigmoid gradient at zero is 0.25") {
  Tensor x = Tensor::scalar(0.0f, true);
  Tape tape;
  Tensor loss = sum(sigmoid_op(x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("elementwise gradients match finite differences") {
  RngStream rng(13, "elemgrad");
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({4, 3}, rng);
  // Keep ReLU inputs away from its kink so central differences are valid.
  for (std::int64_t i = 0; i < b.size(); ++i) {
    b.data()[i] += b.data()[i] >= 0.0f ? 0.25f : -0.25f;
  }
  auto loss = [&] {
    return mean(hadamard(sigmoid_op(a), add(relu(b), scale(a, 0.5f))));
  };
  auto report = testing::gradcheck(loss, {a, b});
  CHECK(report.max_rel_err <= 1e-3);
  CHECK(report.skipped_nonsmooth == 0);
}

TEST_CASE("layer_norm basics") {
  Tensor gamma = Tensor::full({4}, 1.0f);
  Tensor beta = Tensor::zeros({4});

  Tensor constant = Tensor::full({2, 4}, 3.7f);
  Tensor out = layer_norm(constant, gamma, beta);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    CHECK(out.data()[i] == doctest::Approx(0.0f).epsilon(1e-5));
  }

  Tensor row = Tensor::from({1, 2}, {1.0f, -1.0f});
  Tensor g2 = Tensor::full({2}, 1.0f);
  Tensor b2 = Tensor::zeros({2});
  Tensor out2 = layer_norm(row, g2, b2, 1e-8f);
  CHECK(out2.data()[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(out2.data()[1] == doctest::Approx(-1.0).epsilon(1e-4));

  // Affine law: beta shifts the output.
  RngStream rng(17, "ln");
  Tensor x = random_tensor({3, 4}, rng, false);
  Tensor bshift = Tensor::full({4}, 0.3f);
  Tensor base = layer_norm(x, gamma, beta);
  Tensor shifted = layer_norm(x, gamma, bshift);
  for (std::int64_t i = 0; i < base.size(); ++i) {
    CHECK(shifted.data()[i] ==
          doctest::Approx(base.data()[i] + 0.3f).epsilon(1e-5));
  }
}

TEST_CASE("layer_norm normalizes rows and has correct gradients") {
  RngStream rng(19, "lngrad");
  Tensor x = random_tensor({5, 6}, rng, true, 2.0f);
  Tensor gamma = Tensor::full({6}, 1.0f, true);
  Tensor beta = Tensor::zeros({6}, true);
  Tensor out = layer_norm(x, gamma, beta);
  for (int r = 0; r < 5; ++r) {
    double mu = 0.0, var = 0.0;
    for (int j = 0; j < 6; ++j) mu += out.data()[r * 6 + j];
    mu /= 6;
    for (int j = 0; j < 6; ++j) {
      const double c = out.data()[r * 6 + j] - mu;
      var += c * c;
    }
    var /= 6;
    CHECK(std::fabs(mu) <= 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  auto loss = [&] {
    return mean(hadamard(layer_norm(x, gamma, beta),
                         layer_norm(x, gamma, beta)));
  };
  auto report = testing::gradcheck(loss, {x, gamma, beta});
  CHECK(report.max_rel_err <= 1e-3);
}

TEST_CASE("softmax_attention trivial cases") {
  // L=1: softmax over one token is 1, output equals v.
  Tensor q = Tensor::from({1, 3}, {0.3f, -1.0f, 2.0f});
  Tensor k = Tensor::from({1, 3}, {1.0f, 1.0f, 1.0f});
  Tensor v = Tensor::from({1, 3}, {5.0f, -2.0f, 0.25f});
  CHECK(softmax_attention(q, k, v).values() == v.values());

  // Identical tokens: uniform attention, rows equal the mean of v rows.
  Tensor qi = Tensor::full({3, 2}, 0.7f);
  RngStream rng(23, "attn");
  Tensor vi = random_tensor({3, 2}, rng, false);
  Tensor out = softmax_attention(qi, qi, vi);
  for (int c = 0; c < 2; ++c) {
    const float m =
        (vi.data()[c] + vi.data()[2 + c] + vi.data()[4 + c]) / 3.0f;
    for (int r = 0; r < 3; ++r) {
      CHECK(out.data()[r * 2 + c] == doctest::Approx(m).epsilon(1e-6));
    }
  }
}

TEST_CASE("softmax_attention matches a brute-force reference") {
  RngStream rng(29, "attnref");
  const int L = 3, d = 4;
  Tensor q = random_tensor({L, d}, rng, false);
  Tensor k = random_tensor({L, d}, rng, false);
  Tensor v = random_tensor({L, d}, rng, false);
  Tensor out = softmax_attention(q, k, v);

  // Independent double-precision recomputation.
  std::vector<double> expect(L * d, 0.0);
  for (int i = 0; i < L; ++i) {
    std::vector<double> row(L);
    double z = 0.0;
    for (int j = 0; j < L; ++j) {
      double s = 0.0;
      for (int c = 0; c < d; ++c) {
        s += static_cast<double>(q.data()[i * d + c]) *
             static_cast<double>(k.data()[j * d + c]);
      }
      row[j] = std::exp(s / std::sqrt(static_cast<double>(d)));
      z += row[j];
    }
    double rowsum = 0.0;
    for (int j = 0; j < L; ++j) {
      rowsum += row[j] / z;
      for (int c = 0; c < d; ++c) {
        expect[i * d + c] += row[j] / z * v.data()[j * d + c];
      }
    }
    CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-6));
  }
  for (int i = 0; i < L * d; ++i) {
    CHECK(static_cast<double>(out.data()[i]) ==
          doctest::Approx(expect[i]).epsilon(1e-6));
  }
}

TEST_CASE("softmax_attention gradients match finite differences") {
  RngStream rng(31, "attngrad");
  Tensor q = random_tensor({3, 4}, rng);
  Tensor k = random_tensor({3, 4}, rng);
  Tensor v = random_tensor({3, 4}, rng);
  auto loss = [&] { return mean(softmax_attention(q, k, v)); };
  auto report = testing::gradcheck(loss, {q, k, v});
  CHECK(report.max_rel_err <= 1e-3);
}

TEST_CASE("backward: x^2 at 3 gives 6 and accumulates on repeated calls") {
  Tensor x = Tensor::scalar(3.0f, true);
  Tape tape;
  Tensor loss = sum(hadamard(x, x));
  CHECK(loss.item() == doctest::Approx(9.0));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  x.zero_grad();
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: unrelated parameters get zero gradient") {
  Tensor x = Tensor::scalar(2.0f, true);
  Tensor p = Tensor::scalar(5.0f, true);
  Tape tape;
  Tensor loss = sum(hadamard(x, x));
  p.ensure_grad();
  tape.backward(loss);
  CHECK(p.grad()[0] == 0.0f);
}

TEST_CASE("backward contract errors") {
  Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
  Tape tape;
  Tensor y = relu(x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);  // non-scalar
  Tensor stranger = Tensor::scalar(1.0f, true);
  CHECK_THROWS_AS(tape.backward(stranger), ContractError);  // not on tape
}

TEST_CASE("no recording without an active tape or under NoGradGuard") {
  Tensor x = Tensor::from({2}, {1.0f, 2.0f}, true);
  Tensor y = relu(x);  // no tape
  CHECK_FALSE(y.requires_grad());
  Tape tape;
  {
    NoGradGuard ng;
    Tensor z = relu(x);
    CHECK_FALSE(z.requires_grad());
  }
  Tensor w = relu(x);
  CHECK(w.requires_grad());
  CHECK(tape.node_count() == 1);
}

TEST_CASE("reshape, concat, pooling gradients") {
  RngStream rng(37, "misc");
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({2, 2}, rng);
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  auto loss = [&] {
    Tensor cat = concat_cols({a, b});           // [2,5]
    Tensor flat = reshape(cat, {10});           // [10]
    Tensor pooled = global_avg_pool(avg_pool2d(x, 2));  // [1,2]
    return add(mean(flat), mean(pooled));
  };
  auto report = testing::gradcheck(loss, {a, b, x});
  CHECK(report.max_rel_err <= 1e-3);
}

TEST_CASE("bce_with_logits value and gradient") {
  Tensor logits = Tensor::from({2}, {0.0f, 2.0f}, true);
  std::vector<float> targets{1.0f, 0.0f};
  std::vector<float> weights{1.0f, 1.0f};
  Tensor loss = bce_with_logits(logits, targets, weights);
  const double expect =
      0.5 * (std::log(2.0) + (2.0 + std::log1p(std::exp(-2.0))));
  CHECK(static_cast<double>(loss.item()) ==
        doctest::Approx(expect).epsilon(1e-6));

  RngStream rng(41, "bce");
  Tensor l2 = random_tensor({6}, rng, true, 2.0f);
  std::vector<float> t2{1, 0, 1, 1, 0, 0};
  std::vector<float> w2{0.3f, 0.7f, 0.3f, 0.3f, 0.7f, 0.7f};
  auto loss_fn = [&] { return bce_with_logits(l2, t2, w2); };
  auto report = testing::gradcheck(loss_fn, {l2});
  CHECK(report.max_rel_err <= 1e-3);
}

TEST_CASE("adam: zero gradient and zero lr leave parameters unchanged") {
  Tensor p = Tensor::from({3}, {1.0f, -2.0f, 0.5f}, true);
  std::vector<Tensor> params{p};
  AdamState st;
  st.cfg.lr = 0.1f;
  p.ensure_grad();
  adam_step(params, st);  // zero grad
  CHECK(p.values() == std::vector<float>{1.0f, -2.0f, 0.5f});
  CHECK(st.t == 1);

  AdamState st2;
  st2.cfg.lr = 0.0f;
  p.grad()[0] = 1.0f;
  adam_step(params, st2);
  CHECK(p.values() == std::vector<float>{1.0f, -2.0f, 0.5f});
}

TEST_CASE("adam first step approximates -lr * sign(g)") {
  Tensor p = Tensor::from({2}, {0.0f, 0.0f}, true);
  std::vector<Tensor> params{p};
  AdamState st;
  st.cfg.lr = 0.1f;
  st.cfg.eps = 1e-12f;
  p.ensure_grad();
  p.grad()[0] = 2.5f;
  p.grad()[1] = -0.03f;
  adam_step(params, st);
  CHECK(p.data()[0] == doctest::Approx(-0.1).epsilon(1e-4));
  CHECK(p.data()[1] == doctest::Approx(0.1).epsilon(1e-4));
}

TEST_CASE("determinism: identical seeds produce identical grads") {
  auto run = [] {
    RngStream rng(99, "det");
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    Tape tape;
    Tensor loss = mean(hadamard(matmul(a, b), sigmoid_op(a)));
    tape.backward(loss);
    std::vector<float> out = a.grad_values();
    out.push_back(loss.item());
    return out;
  };
  CHECK(run() == run());
}
