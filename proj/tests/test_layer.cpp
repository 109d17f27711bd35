// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "cimste/layer.hpp"
#include "cimste/train.hpp"
#include "test_util.hpp"

using namespace cimste;
using layer::GradMode;
using layer::LinearLayer;
using layer::NoiseCounters;
using testutil::bitwise_equal;
using testutil::random_tensor;

namespace {

LinearLayer make_layer(std::size_t out, std::size_t in, std::uint64_t seed,
                       bool with_bias = true) {
  LinearLayer l;
  l.weight = Tensor({out, in}, testutil::random_values(out * in, seed, 0, 0.8), true);
  if (with_bias) {
    l.bias = Tensor({out}, testutil::random_values(out, seed, 1, 0.2), true);
  }
  return l;
}

std::vector<double> grad_vec(const Tensor& t) {
  std::span<const double> g = t.grad();
  return std::vector<double>(g.begin(), g.end());
}

}  // namespace

TEST_CASE("without noise the layer is the plain linear map") {
  noise::NoiseConfig cfg;
  LinearLayer lin = make_layer(4, 3, 500);
  Tensor x = random_tensor({5, 3}, 500, 7);
  Tensor a = layer::noisy_linear(x, lin, cfg, false, GradMode::Detached, {0, 0});
  Tensor b = layer::clean_linear(x, lin);
  CHECK(bitwise_equal(a.values(), b.values()));

  Tensor c = layer::noisy_linear(x, lin, cfg, true, GradMode::Baseline, {0, 0});
  CHECK(bitwise_equal(c.values(), b.values()));
}

TEST_CASE("detached and isolated gradients equal baseline gradients bit for bit") {
  noise::NoiseConfig cfg;
  cfg.level = 2.0;
  for (std::uint64_t trial = 0; trial < 25; ++trial) {
    const std::size_t out = 1 + trial % 6, in = 1 + (trial * 7) % 9,
                      batch = 1 + trial % 4;
    cfg.seed = trial;
    Tensor x = random_tensor({batch, in}, 501, trial * 3, true);
    Tensor coeffs = random_tensor({batch, out}, 501, trial * 3 + 1);

    std::vector<std::vector<double>> wg, bg, xg;
    for (GradMode mode : {GradMode::Baseline, GradMode::Isolated, GradMode::Detached}) {
      LinearLayer lin = make_layer(out, in, 502 + trial);
      Tensor xc = Tensor({batch, in}, x.to_vector(), true);
      Tensor y = layer::noisy_linear(xc, lin, cfg, true, mode, {0, trial});
      backward(sum(mul(y, coeffs)));
      wg.push_back(grad_vec(lin.weight));
      bg.push_back(grad_vec(lin.bias));
      xg.push_back(grad_vec(xc));
    }
    REQUIRE(bitwise_equal(wg[1], wg[0]));
    REQUIRE(bitwise_equal(wg[2], wg[0]));
    REQUIRE(bitwise_equal(bg[1], bg[0]));
    REQUIRE(bitwise_equal(bg[2], bg[0]));
    REQUIRE(bitwise_equal(xg[1], xg[0]));
    REQUIRE(bitwise_equal(xg[2], xg[0]));
  }
}

TEST_CASE("recorded noise pipeline reproduces the standalone simulator bit for bit") {
  // Full mode returns the mirrored pipeline output directly, so it must match
  // the raw simulator exactly.
  noise::NoiseConfig cfg;
  cfg.level = 2.0;
  for (std::uint64_t trial = 0; trial < 25; ++trial) {
    cfg.seed = 1000 + trial;
    const std::size_t out = 2 + trial % 5, in = 2 + trial % 7, batch = 1 + trial % 3;
    LinearLayer lin = make_layer(out, in, 503 + trial);
    Tensor x = random_tensor({batch, in}, 503, trial);

    Tensor y = layer::noisy_linear(x, lin, cfg, true, GradMode::Full,
                                   {trial % 3, trial});
    const std::vector<double> raw = layer::noisy_linear_values(
        x.values(), batch, lin, cfg, {trial % 3, trial});
    REQUIRE(bitwise_equal(y.values(), raw));
  }
}

TEST_CASE("detached forward value equals the standalone pipeline output") {
  // The literal y_clean + detach(y_scaled - detach(y_clean)) composition of
  // the detached mode re-rounds once, so its output can differ from the
  // standalone pipeline by a couple of ulps; everything upstream is bit-exact.
  noise::NoiseConfig cfg;
  cfg.level = 2.0;
  for (std::uint64_t trial = 0; trial < 25; ++trial) {
    cfg.seed = 1000 + trial;
    const std::size_t out = 2 + trial % 5, in = 2 + trial % 7, batch = 1 + trial % 3;
    LinearLayer lin = make_layer(out, in, 503 + trial);
    Tensor x = random_tensor({batch, in}, 503, trial);

    Tensor y_clean = layer::clean_linear(x, lin);
    Tensor y = layer::noisy_linear(x, lin, cfg, true, GradMode::Detached,
                                   {trial % 3, trial});
    const std::vector<double> raw = layer::noisy_linear_values(
        x.values(), batch, lin, cfg, {trial % 3, trial});
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double tol =
          4.0 * 2.220446049250313e-16 * (std::fabs(raw[i]) + std::fabs(y_clean.at(i)));
      REQUIRE(std::fabs(y.at(i) - raw[i]) <= tol);
    }
  }
}

TEST_CASE("isolated and detached forwards are bit-identical") {
  noise::NoiseConfig cfg;
  cfg.level = 3.0;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    cfg.seed = 2000 + trial;
    LinearLayer lin = make_layer(4, 6, 504 + trial);
    Tensor x = random_tensor({3, 6}, 504, trial);
    Tensor a = layer::noisy_linear(x, lin, cfg, true, GradMode::Isolated, {1, trial});
    Tensor b = layer::noisy_linear(x, lin, cfg, true, GradMode::Detached, {1, trial});
    REQUIRE(bitwise_equal(a.values(), b.values()));
  }
}

TEST_CASE("full mode gradients flow only through the scale and gain paths") {
  // Hard quantizers kill every per-element path; what survives reaches W only
  // via max|W| (the weight scale) and via the row of W feeding max|y_clean|
  // (the gain).  Every other coordinate must be exactly zero.
  noise::NoiseConfig cfg;
  cfg.level = 1.0;
  cfg.seed = 9;
  const std::size_t out = 5, in = 4, batch = 3;
  LinearLayer lin = make_layer(out, in, 505);
  Tensor x = random_tensor({batch, in}, 505, 9);
  Tensor coeffs = random_tensor({batch, out}, 505, 10);

  Tensor y = layer::noisy_linear(x, lin, cfg, true, GradMode::Full, {0, 0});
  backward(sum(mul(y, coeffs)));

  // Locate the two allowed coordinates.
  const std::vector<double> w = lin.weight.to_vector();
  std::size_t argmax_w = 0;
  for (std::size_t i = 1; i < w.size(); ++i) {
    if (std::fabs(w[i]) > std::fabs(w[argmax_w])) argmax_w = i;
  }
  Tensor y_clean = layer::clean_linear(x, lin);
  const std::vector<double> yc = y_clean.to_vector();
  std::size_t argmax_y = 0;
  for (std::size_t i = 1; i < yc.size(); ++i) {
    if (std::fabs(yc[i]) > std::fabs(yc[argmax_y])) argmax_y = i;
  }
  const std::size_t gain_row = argmax_y % out;  // output feature of max |y_clean|

  std::span<const double> g = lin.weight.grad();
  bool any_nonzero = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool allowed = i == argmax_w || i / in == gain_row;
    if (!allowed) REQUIRE(g[i] == 0.0);
    if (g[i] != 0.0) any_nonzero = true;
  }
  CHECK(any_nonzero);  // the scale path itself does carry gradient
}

TEST_CASE("full mode stalls while detached matches the clean backward") {
  noise::NoiseConfig cfg;
  cfg.level = 2.0;
  cfg.seed = 14;
  LinearLayer ref = make_layer(3, 4, 506);
  Tensor x = random_tensor({2, 4}, 506, 5, true);
  Tensor coeffs = random_tensor({2, 3}, 506, 6);

  backward(sum(mul(layer::clean_linear(x, ref), coeffs)));
  const std::vector<double> clean_grad = grad_vec(ref.weight);

  LinearLayer full = make_layer(3, 4, 506);
  Tensor y = layer::noisy_linear(x.detach(), full, cfg, true, GradMode::Full, {0, 0});
  backward(sum(mul(y, coeffs)));
  CHECK_FALSE(bitwise_equal(grad_vec(full.weight), clean_grad));
}

TEST_CASE("tape footprint orders isolated below detached below full") {
  noise::NoiseConfig cfg;
  cfg.level = 1.0;
  cfg.seed = 3;
  Tensor x = random_tensor({8, 6}, 507, 0);
  Tensor coeffs = random_tensor({8, 4}, 507, 1);

  std::uint64_t nodes[3];
  std::int64_t bytes[3];
  int slot = 0;
  for (GradMode mode : {GradMode::Isolated, GradMode::Detached, GradMode::Full}) {
    layer::Model model = layer::build_model({6, 10, 4}, mode, cfg, 99);
    engine_stats().reset_peaks();
    {
      Tensor y = model.forward(x, true, 0);
      backward(sum(mul(y, coeffs)));
    }
    nodes[slot] = static_cast<std::uint64_t>(engine_stats().nodes_peak());
    bytes[slot] = engine_stats().bytes_peak();
    ++slot;
  }
  CHECK(nodes[0] < nodes[1]);
  CHECK(nodes[1] < nodes[2]);
  CHECK(bytes[0] < bytes[1]);
  CHECK(bytes[1] < bytes[2]);
}

TEST_CASE("build_model structure and parameter count") {
  noise::NoiseConfig cfg;
  layer::Model model = layer::build_model({2, 8, 2}, GradMode::Detached, cfg, 1);
  CHECK(model.layers().size() == 2);
  CHECK(model.parameter_count() == 42);  // 2*8+8 + 8*2+2
  CHECK_THROWS_AS(layer::build_model({4}, GradMode::Detached, cfg, 1), ConfigError);
}

TEST_CASE("baseline model forward equals the clean multilayer forward") {
  noise::NoiseConfig cfg;
  layer::Model model = layer::build_model({3, 6, 2}, GradMode::Baseline, cfg, 5);
  Tensor x = random_tensor({4, 3}, 508, 0);
  Tensor y = model.forward(x, true, 0);

  Tensor h = relu(layer::clean_linear(x, model.layers()[0]));
  Tensor want = layer::clean_linear(h, model.layers()[1]);
  CHECK(bitwise_equal(y.values(), want.values()));
}

TEST_CASE("multilayer detached and isolated agree on values and gradients") {
  noise::NoiseConfig cfg;
  cfg.level = 2.0;
  Tensor x = random_tensor({6, 4}, 509, 0);
  std::vector<int> labels = {0, 1, 2, 0, 1, 2};

  std::vector<double> values[2];
  std::vector<std::vector<double>> grads[2];
  int slot = 0;
  for (GradMode mode : {GradMode::Isolated, GradMode::Detached}) {
    layer::Model model = layer::build_model({4, 9, 3}, mode, cfg, 42);
    Tensor logits = model.forward(x, true, 5);
    values[slot] = logits.to_vector();
    backward(train::cross_entropy(logits, labels));
    for (Tensor* p : model.parameters()) grads[slot].push_back(grad_vec(*p));
    ++slot;
  }
  REQUIRE(bitwise_equal(values[0], values[1]));
  for (std::size_t p = 0; p < grads[0].size(); ++p) {
    REQUIRE(bitwise_equal(grads[0][p], grads[1][p]));
  }
}

TEST_CASE("value-only forward matches the tensor forward") {
  noise::NoiseConfig cfg;
  cfg.level = 1.5;
  cfg.seed = 77;
  layer::Model model = layer::build_model({4, 7, 3}, GradMode::Detached, cfg, 77);
  Tensor x = random_tensor({5, 4}, 510, 0);

  Tensor y = model.forward(x, true, 12);
  const std::vector<double> fast = model.forward_values(x.values(), 5, true, cfg, 12);
  CHECK(bitwise_equal(y.values(), fast));

  Tensor yc = model.forward(x, false, 13);
  const std::vector<double> fast_clean = model.forward_values(x.values(), 5, false, cfg, 13);
  CHECK(bitwise_equal(yc.values(), fast_clean));
}

TEST_CASE("noise counters give distinct draws per layer and per pass") {
  noise::NoiseConfig cfg;
  cfg.level = 2.0;
  cfg.seed = 4;
  cfg.enabled_sources = noise::kProgramming;
  LinearLayer lin = make_layer(3, 3, 511);
  Tensor x = random_tensor({2, 3}, 511, 4);

  const std::vector<double> a =
      layer::noisy_linear_values(x.values(), 2, lin, cfg, {0, 0});
  const std::vector<double> b =
      layer::noisy_linear_values(x.values(), 2, lin, cfg, {1, 0});
  const std::vector<double> c =
      layer::noisy_linear_values(x.values(), 2, lin, cfg, {0, 1});
  CHECK_FALSE(bitwise_equal(a, b));
  CHECK_FALSE(bitwise_equal(a, c));
}
