// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "crafted/nn/layers.hpp"
#include "crafted/params.hpp"
#include "test_support.hpp"

namespace crafted {
namespace {

using test::random_tensor;

// Direct 7-loop convolution used as the reference.
Tensor naive_conv(const Tensor& x, std::span<const double> w, std::span<const double> b,
                  std::size_t co) {
  const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  Tensor y({n, co, h, wd});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < wd; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < ci; ++c)
            for (int di = -1; di <= 1; ++di)
              for (int dj = -1; dj <= 1; ++dj) {
                const long ii = static_cast<long>(i) + di, jj = static_cast<long>(j) + dj;
                if (ii < 0 || jj < 0 || ii >= static_cast<long>(h) || jj >= static_cast<long>(wd))
                  continue;
                acc += w[((o * ci + c) * 3 + static_cast<std::size_t>(di + 1)) * 3 +
                         static_cast<std::size_t>(dj + 1)] *
                       x[((s * ci + c) * h + static_cast<std::size_t>(ii)) * wd +
                         static_cast<std::size_t>(jj)];
              }
          y[((s * co + o) * h + i) * wd + j] = acc;
        }
  return y;
}

TEST_CASE("conv2d matches the direct sum") {
  const Tensor x = random_tensor({2, 3, 5, 4}, 1);
  const Tensor w = random_tensor({4, 3, 3, 3}, 2);
  const Tensor b = random_tensor({4}, 3);
  const Tensor y = nn::conv2d(x, w.values(), b.values(), 4);
  const Tensor ref = naive_conv(x, w.values(), b.values(), 4);
  CHECK(test::relative_error(y.values(), ref.values()) < 1e-13);
}

TEST_CASE("conv2d backward agrees with finite differences") {
  Tensor x = random_tensor({2, 2, 4, 4}, 4);
  Tensor w = random_tensor({3, 2, 3, 3}, 5);
  Tensor b = random_tensor({3}, 6);
  const Tensor probe = random_tensor({2, 3, 4, 4}, 7);
  auto loss = [&] {
    const Tensor y = nn::conv2d(x, w.values(), b.values(), 3);
    return dot(y.values(), probe.values());
  };
  std::vector<double> gw(w.numel(), 0.0), gb(3, 0.0);
  Tensor gx;
  nn::conv2d_backward(x, w.values(), 3, probe, gw, gb, &gx);
  CHECK(test::relative_error(gw, test::numeric_gradient(w.values(), loss)) < 1e-7);
  CHECK(test::relative_error(gb, test::numeric_gradient(b.values(), loss)) < 1e-7);
  CHECK(test::relative_error(gx.values(), test::numeric_gradient(x.values(), loss)) < 1e-7);
}

TEST_CASE("linear is batch invariant and its backward is exact") {
  Tensor x = random_tensor({5, 4}, 8);
  Tensor w = random_tensor({3, 4}, 9);
  Tensor b = random_tensor({3}, 10);
  const Tensor y = nn::linear(x, w.values(), b.values(), 3);
  for (std::size_t i = 0; i < 5; ++i) {
    const Tensor yi = nn::linear(x.item(i).reshaped({1, 4}), w.values(), b.values(), 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(yi[j] == y[i * 3 + j]);
  }
  const Tensor probe = random_tensor({5, 3}, 11);
  auto loss = [&] { return dot(nn::linear(x, w.values(), b.values(), 3).values(), probe.values()); };
  std::vector<double> gw(12, 0.0), gb(3, 0.0);
  Tensor gx;
  nn::linear_backward(x, w.values(), 3, probe, gw, gb, &gx);
  CHECK(test::relative_error(gw, test::numeric_gradient(w.values(), loss)) < 1e-8);
  CHECK(test::relative_error(gb, test::numeric_gradient(b.values(), loss)) < 1e-8);
  CHECK(test::relative_error(gx.values(), test::numeric_gradient(x.values(), loss)) < 1e-8);
}

TEST_CASE("pooling, upsampling, silu and channel ops are adjoint to their backward") {
  Tensor x = random_tensor({2, 3, 4, 6}, 12);
  SUBCASE("avg_pool2") {
    const Tensor probe = random_tensor({2, 3, 2, 3}, 13);
    auto loss = [&] { return dot(nn::avg_pool2(x).values(), probe.values()); };
    CHECK(test::relative_error(nn::avg_pool2_backward(probe).values(),
                               test::numeric_gradient(x.values(), loss)) < 1e-8);
  }
  SUBCASE("upsample2") {
    const Tensor probe = random_tensor({2, 3, 8, 12}, 14);
    auto loss = [&] { return dot(nn::upsample2(x).values(), probe.values()); };
    CHECK(test::relative_error(nn::upsample2_backward(probe).values(),
                               test::numeric_gradient(x.values(), loss)) < 1e-8);
  }
  SUBCASE("silu") {
    const Tensor probe = random_tensor({2, 3, 4, 6}, 15);
    auto loss = [&] { return dot(nn::silu(x).values(), probe.values()); };
    CHECK(test::relative_error(nn::silu_backward(x, probe).values(),
                               test::numeric_gradient(x.values(), loss)) < 1e-8);
  }
  SUBCASE("concat / split") {
    const Tensor y = random_tensor({2, 2, 4, 6}, 16);
    const Tensor cat = nn::concat_channels(x, y);
    Tensor ga, gb;
    nn::split_channels(cat, 3, ga, gb);
    CHECK(ga == x);
    CHECK(gb == y);
  }
  SUBCASE("channel bias") {
    Tensor z = x;
    const Tensor bias = random_tensor({2, 3}, 17);
    nn::add_channel_bias(z, bias);
    CHECK(z[0] == doctest::Approx(x[0] + bias[0]));
    const Tensor summed = nn::channel_bias_backward(Tensor({2, 3, 4, 6}, 1.0));
    for (double v : summed.values()) CHECK(v == 24.0);
  }
}

TEST_CASE("timestep embedding matches high-precision values") {
  const int t[] = {7};
  const Tensor e = nn::timestep_embedding(t, 8);
  // sin(7 f_k), cos(7 f_k) with f_k = 10000^(-k/4), evaluated at 40 digits.
  const double want[] = {0.6569865987187890904,  0.64421768723769105367, 0.069942847337532763977,
                         0.0069999428334733915033, 0.75390225434330463814, 0.76484218728448842626,
                         0.99755100025327957462,  0.99997550010004150327};
  for (int i = 0; i < 8; ++i) CHECK(e[static_cast<std::size_t>(i)] == doctest::Approx(want[i]).epsilon(1e-13));
  CHECK_THROWS_AS(nn::timestep_embedding(t, 7), std::invalid_argument);
}

TEST_CASE("parameter sets keep registration order in one flat buffer") {
  ParameterSet p;
  CHECK(p.add("a", {2, 3}) == 0);
  CHECK(p.add("b", {4}) == 1);
  CHECK(p.size() == 10);
  CHECK(p.entry("b").offset == 6);
  p.view("b")[0] = 5.0;
  CHECK(p.flat()[6] == 5.0);
  CHECK_THROWS(p.index_of("missing"));
  ParameterSet q;
  q.add("a", {2, 3});
  q.add("b", {4});
  CHECK(p.same_layout(q));
  CHECK_FALSE(p == q);
}

TEST_CASE("tensor helpers") {
  const Tensor a({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(a.item(1).values() == std::vector<double>{3.0, 4.0});
  CHECK(l2_norm(a.values()) == doctest::Approx(std::sqrt(30.0)));
  const Tensor items[] = {a, a};
  CHECK(stack(items).shape() == Shape{2, 2, 2});
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0}), std::invalid_argument);
  CHECK_THROWS(require_same_shape(a, Tensor({4}), "test"));
}

}  // namespace
}  // namespace crafted
