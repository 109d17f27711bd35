// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>

#include "cimste/tensor.hpp"
#include "test_util.hpp"

using namespace cimste;
using testutil::bitwise_equal;
using testutil::fd_gradient;
using testutil::max_rel_err;
using testutil::random_tensor;

TEST_CASE("matmul identity and dot product") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  Tensor y = matmul(eye, m);
  CHECK(y.to_vector() == std::vector<double>{1, 2, 3, 4});

  Tensor a({1, 2}, {1, 2});
  Tensor b({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Tensor a = random_tensor({4, 5}, 11, 0);
  Tensor b = random_tensor({5, 3}, 11, 1);
  Tensor y = matmul(a, b);

  // Independent brute-force product.
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 5; ++k) acc += a.at(i * 5 + k) * b.at(k * 3 + j);
      CHECK(std::fabs(y.at(i * 3 + j) - acc) < 1e-12);
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a({2, 3}, std::vector<double>(6, 1.0));
  Tensor b({4, 2}, std::vector<double>(8, 1.0));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[4 x 2]") != std::string::npos);
  }
}

TEST_CASE("relu values and tie handling") {
  Tensor x({3}, {-1.0, 0.0, 2.0}, true);
  Tensor y = relu(x);
  CHECK(y.to_vector() == std::vector<double>{0.0, 0.0, 2.0});

  backward(sum(y));
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 0.0);  // tie at exactly zero propagates zero
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("add with scalar zero is identity") {
  Tensor x = random_tensor({3, 3}, 12);
  Tensor y = add(x, Tensor::scalar(0.0));
  CHECK(bitwise_equal(y.values(), x.values()));
}

TEST_CASE("incompatible elementwise shapes raise") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({3}, {1, 2, 3});
  CHECK_THROWS_AS(add(a, b), DimensionError);
}

TEST_CASE("mul backward matches finite differences") {
  Tensor a = random_tensor({3, 3}, 13, 0, true);
  Tensor b = random_tensor({3, 3}, 13, 1);
  auto loss = [&] { return sum(mul(mul(a, b), a)).item(); };  // nonlinear in a
  backward(sum(mul(mul(a, b), a)));
  CHECK(max_rel_err(a.grad(), fd_gradient(loss, a, 1e-6)) < 1e-6);
}

TEST_CASE("unary and reduction backward rules match finite differences") {
  Tensor x = random_tensor({4, 3}, 14, 0, true);
  auto build = [&] {
    Tensor t = tanh(scale(x, 0.8));
    t = add_rowvec(t, Tensor({3}, {0.1, -0.2, 0.3}));
    t = mul(t, t);
    Tensor s = add(mean(t), max_abs(x));
    return add(s, div(sum(transpose(t)), Tensor::scalar(3.0)));
  };
  backward(build());
  auto loss = [&] { return build().item(); };
  CHECK(max_rel_err(x.grad(), fd_gradient(loss, x, 1e-6)) < 1e-6);
}

TEST_CASE("row_sum and clamp gradients") {
  Tensor x({2, 3}, {-2.0, 0.5, 3.0, 1.0, -0.5, 7.0}, true);
  backward(sum(row_sum(clamp(x, -1.0, 2.0))));
  // pass-through strictly inside the range, zero outside
  const std::vector<double> expect = {0, 1, 0, 1, 1, 0};
  for (std::size_t i = 0; i < expect.size(); ++i) CHECK(x.grad()[i] == expect[i]);
}

TEST_CASE("round_even uses banker's rounding and has zero gradient") {
  Tensor x({5}, {0.5, 1.5, 2.5, -0.5, -1.5}, true);
  Tensor y = round_even(x);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == 2.0);
  CHECK(y.at(2) == 2.0);
  CHECK(y.at(3) == 0.0);
  CHECK(y.at(4) == -2.0);
  backward(sum(y));
  for (std::size_t i = 0; i < 5; ++i) CHECK(x.grad()[i] == 0.0);
}

TEST_CASE("detach is value-preserving and blocks gradients") {
  Tensor t = random_tensor({4, 2}, 15, 0, true);
  Tensor d = t.detach();
  CHECK_FALSE(d.requires_grad());
  CHECK_FALSE(d.node_id().has_value());
  double worst = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    worst = std::max(worst, std::fabs(d.at(i) - t.at(i)));
  }
  CHECK(worst == 0.0);
}

TEST_CASE("sum of w plus detached w gives unit gradients") {
  Tensor w = random_tensor({2, 3}, 16, 0, true);
  backward(sum(add(w, w.detach())));
  for (std::size_t i = 0; i < w.numel(); ++i) CHECK(w.grad()[i] == 1.0);
}

TEST_CASE("clean plus detached delta backward equals plain linear backward") {
  // y = x W^T + delta.detach() must give exactly the plain-linear gradient.
  Tensor w = random_tensor({3, 4}, 17, 0, true);
  Tensor w_ref({3, 4}, w.to_vector(), true);
  Tensor x = random_tensor({5, 4}, 17, 1);
  Tensor c = random_tensor({5, 3}, 17, 2);
  Tensor delta = random_tensor({5, 3}, 17, 3);

  backward(sum(mul(add(matmul(x, transpose(w)), delta.detach()), c)));
  backward(sum(mul(matmul(x, transpose(w_ref)), c)));
  CHECK(bitwise_equal(w.grad(), w_ref.grad()));
}

TEST_CASE("backward populates unit gradients for sum") {
  Tensor w = Tensor::zeros({2, 2}, true);
  backward(sum(w));
  for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == 1.0);
}

TEST_CASE("zero-scaled loss yields zero gradients") {
  Tensor w = random_tensor({3, 3}, 18, 0, true);
  backward(scale(sum(w), 0.0));
  for (std::size_t i = 0; i < 9; ++i) CHECK(w.grad()[i] == 0.0);
}

TEST_CASE("backward rejects non-scalar and off-tape losses") {
  Tensor w = random_tensor({2, 2}, 19, 0, true);
  CHECK_THROWS_AS(backward(add(w, w)), ContractError);
  CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), ContractError);
}

TEST_CASE("three-layer perceptron gradients match finite differences") {
  Tensor w1 = random_tensor({6, 4}, 20, 0, true, 0.7);
  Tensor b1 = random_tensor({6}, 20, 1, true, 0.1);
  Tensor w2 = random_tensor({5, 6}, 20, 2, true, 0.7);
  Tensor w3 = random_tensor({2, 5}, 20, 3, true, 0.7);
  Tensor x = random_tensor({3, 4}, 20, 4);
  Tensor target = random_tensor({3, 2}, 20, 5);

  auto build = [&] {
    Tensor h = relu(add_rowvec(matmul(x, transpose(w1)), b1));
    h = tanh(matmul(h, transpose(w2)));
    Tensor err = sub(matmul(h, transpose(w3)), target);
    return mean(mul(err, err));
  };
  backward(build());
  auto loss = [&] { return build().item(); };
  for (Tensor* p : {&w1, &b1, &w2, &w3}) {
    CHECK(max_rel_err(p->grad(), fd_gradient(loss, *p, 1e-5)) < 1e-5);
  }
}

TEST_CASE("gradient accumulation across backward calls") {
  Tensor w = random_tensor({2, 2}, 21, 0, true);
  backward(sum(w));
  backward(sum(w));
  for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == 2.0);
  w.zero_grad();
  for (std::size_t i = 0; i < 4; ++i) CHECK(w.grad()[i] == 0.0);
}

TEST_CASE("tape replay is bit-deterministic") {
  auto run = [] {
    Tensor w = random_tensor({4, 4}, 22, 0, true);
    Tensor x = random_tensor({4, 4}, 22, 1);
    backward(mean(mul(tanh(matmul(x, w)), x)));
    std::span<const double> g = w.grad();
    return std::vector<double>(g.begin(), g.end());
  };
  const std::vector<double> g1 = run();
  const std::vector<double> g2 = run();
  CHECK(bitwise_equal(g1, g2));
}

TEST_CASE("disabled grad scope records nothing") {
  Tensor w = random_tensor({8, 8}, 23, 0, true);
  Tensor x = random_tensor({8, 8}, 23, 1);

  const std::uint64_t before = engine_stats().nodes_created();
  {
    GradScope off(false);
    Tensor y = matmul(x, w);
    CHECK(y.to_vector().size() == 64);
    CHECK_FALSE(y.node_id().has_value());
  }
  CHECK(engine_stats().nodes_created() == before);

  // nested enable-inside-disable: innermost wins
  {
    GradScope off(false);
    CHECK_FALSE(grad_recording_enabled());
    {
      GradScope on(true);
      CHECK(grad_recording_enabled());
      Tensor y = matmul(x, w);
      CHECK(y.node_id().has_value());
    }
    CHECK_FALSE(grad_recording_enabled());
  }
  CHECK(grad_recording_enabled());
}

TEST_CASE("disabled scope allocates strictly less tape than recording") {
  Tensor w = random_tensor({16, 16}, 24, 0, true);
  auto pipeline = [&] {
    Tensor g = mul(relu(w), Tensor::full({16, 16}, 1.01));
    g = add(scale(g, 0.99), Tensor::full({16, 16}, 0.5));
    return sum(g);
  };

  const std::uint64_t before_off = engine_stats().nodes_created();
  {
    GradScope off(false);
    pipeline();
  }
  const std::uint64_t grown_off = engine_stats().nodes_created() - before_off;

  const std::uint64_t before_on = engine_stats().nodes_created();
  pipeline();
  const std::uint64_t grown_on = engine_stats().nodes_created() - before_on;

  CHECK(grown_off == 0);
  CHECK(grown_on > 0);
}

TEST_CASE("float32 tensors round storage through float") {
  const double v = 0.1;  // not representable in float
  Tensor t({1}, {v}, false, DType::F32);
  CHECK(t.item() == static_cast<double>(static_cast<float>(v)));
  CHECK(t.dtype() == DType::F32);

  Tensor a({2}, {1.0 / 3.0, 2.0 / 3.0}, false, DType::F32);
  Tensor b({2}, {1.0 / 7.0, 2.0 / 7.0}, false, DType::F32);
  Tensor y = mul(a, b);
  CHECK(y.dtype() == DType::F32);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(y.at(i) == static_cast<double>(static_cast<float>(a.at(i) * b.at(i))));
  }
  // promotion to f64 when mixed
  CHECK(mul(a, Tensor::scalar(2.0)).dtype() == DType::F64);
}

TEST_CASE("convolution via unfold matches direct convolution and finite differences") {
  const std::size_t C = 2, H = 5, W = 5, kh = 3, kw = 3, OC = 3;
  Tensor img = random_tensor({1, C, H, W}, 25, 0, true);
  Tensor kernel = random_tensor({OC, C * kh * kw}, 25, 1, true, 0.5);

  auto build = [&] { return matmul(unfold(img, kh, kw), transpose(kernel)); };
  Tensor y = build();  // [OH*OW, OC]
  CHECK(y.shape() == std::vector<std::size_t>{9, OC});

  // Direct convolution oracle.
  for (std::size_t oc = 0; oc < OC; ++oc) {
    for (std::size_t oy = 0; oy < 3; ++oy) {
      for (std::size_t ox = 0; ox < 3; ++ox) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              acc += img.at((c * H + oy + ky) * W + ox + kx) *
                     kernel.at(oc * C * kh * kw + (c * kh + ky) * kw + kx);
            }
          }
        }
        CHECK(std::fabs(y.at((oy * 3 + ox) * OC + oc) - acc) < 1e-12);
      }
    }
  }

  backward(mean(mul(build(), build())));
  auto loss = [&] {
    Tensor t = build();
    return mean(mul(t, t)).item();
  };
  CHECK(max_rel_err(img.grad(), fd_gradient(loss, img, 1e-6)) < 1e-6);
  CHECK(max_rel_err(kernel.grad(), fd_gradient(loss, kernel, 1e-6)) < 1e-6);
}
