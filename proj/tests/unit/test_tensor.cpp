// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "masan/ops.hpp"
#include "masan/rng.hpp"
#include "masan/tensor.hpp"
#include "test_util.hpp"

using namespace masan;
using masan::test::random_tensor;

namespace {

// Naive loops, written independently of the library kernels.
std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t p = 0; p < k; ++p) c[i * n + j] += static_cast<double>(a[i * k + p]) * b[p * n + j];
  return c;
}

double naive_conv_at(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad, std::int64_t n,
                     std::int64_t f, std::int64_t z, std::int64_t y, std::int64_t xx) {
  const auto C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const auto kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  double s = bias[f];
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t a = 0; a < kd; ++a)
      for (std::int64_t b = 0; b < kh; ++b)
        for (std::int64_t e = 0; e < kw; ++e) {
          const auto iz = z * stride - pad + a, iy = y * stride - pad + b, ix = xx * stride - pad + e;
          if (iz < 0 || iy < 0 || ix < 0 || iz >= D || iy >= H || ix >= W) continue;
          s += static_cast<double>(x[(((n * C + c) * D + iz) * H + iy) * W + ix]) *
               w[(((f * C + c) * kd + a) * kh + b) * kw + e];
        }
  return s;
}

// Corner-aligned linear weights along one axis of length n doubled to 2n.
double lerp_coord(std::int64_t o, std::int64_t n) { return n == 1 ? 0.0 : o * double(n - 1) / double(2 * n - 1); }

}  // namespace

TEST_CASE("tensor construction and handle semantics") {
  Tensor t({2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(numel_of(t.shape()) == 6);
  Tensor alias = t;
  alias[0] = 9.0f;
  CHECK(t[0] == 9.0f);
  Tensor deep = t.clone();
  deep[0] = 0.0f;
  CHECK(t[0] == 9.0f);
  CHECK(t.bit_equal(alias));
  CHECK_FALSE(t.bit_equal(deep));
  CHECK_THROWS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}));
  CHECK_THROWS(Tensor(Shape{0, 2}));
}

TEST_CASE("elementwise examples") {
  const Tensor x(Shape{3}, {-1, 0, 2});
  const Tensor r = relu(x);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == 2.0f);
  const Tensor m = mul(Tensor({3}, {1, 2, 3}), Tensor({3}, {4, 5, 6}));
  CHECK(m[0] == 4.0f);
  CHECK(m[1] == 10.0f);
  CHECK(m[2] == 18.0f);
  CHECK(sigmoid(Tensor({1}, {0}))[0] == 0.5f);
  CHECK(abs(Tensor({2}, {-3, 3}))[0] == 3.0f);
  CHECK(scale(Tensor({1}, {2}), -1.5f)[0] == -3.0f);
  CHECK(sub(Tensor({1}, {2}), Tensor({1}, {5}))[0] == -3.0f);
}

TEST_CASE("binary shape mismatch names both shapes") {
  try {
    add(Tensor({2, 3}), Tensor({3, 2}));
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[3,2]") != std::string::npos);
  }
}

TEST_CASE("matmul examples and naive oracle") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(eye, m).bit_equal(m));
  CHECK(matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}))[0] == 11.0f);
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), std::invalid_argument);

  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    const auto want = naive_matmul(a, b);
    const Tensor got = matmul(a, b);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

TEST_CASE("batched matmul equals per-slice products") {
  Rng rng(12);
  const Tensor a = random_tensor({3, 2, 5}, rng), b = random_tensor({3, 5, 4}, rng);
  const Tensor c = matmul(a, b);
  for (std::int64_t s = 0; s < 3; ++s) {
    const Tensor as = reshape(slice(a, 0, s, 1), {2, 5}).clone();
    const Tensor bs = reshape(slice(b, 0, s, 1), {5, 4}).clone();
    const auto want = naive_matmul(as, bs);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(c[s * 8 + i] == doctest::Approx(want[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv3d examples") {
  const Tensor x = Tensor::ones({1, 1, 4, 4, 4});
  const Tensor w = Tensor::ones({1, 1, 3, 3, 3});
  const Tensor out = conv3d(x, w, Tensor::zeros({1}), 1, 1);
  CHECK(out.shape() == Shape{1, 1, 4, 4, 4});
  // Interior voxels see the whole kernel.
  for (int z = 1; z < 3; ++z)
    for (int y = 1; y < 3; ++y)
      for (int xx = 1; xx < 3; ++xx) CHECK(out[(z * 4 + y) * 4 + xx] == 27.0f);
  CHECK(out[0] == 8.0f);  // corner sees 2x2x2

  const Tensor big = Tensor::ones({1, 1, 8, 8, 8});
  CHECK(conv3d(big, w, Tensor::zeros({1}), 2, 1).shape() == Shape{1, 1, 4, 4, 4});
  CHECK_THROWS(conv3d(Tensor::ones({1, 1, 2, 2, 2}), Tensor::ones({1, 1, 5, 5, 5}), Tensor::zeros({1}), 1, 0));
  CHECK_THROWS(conv3d(big, Tensor::ones({1, 1, 2, 2, 2}), Tensor::zeros({1}), 1, 0));
  CHECK_THROWS(conv3d(big, Tensor::ones({1, 2, 3, 3, 3}), Tensor::zeros({1}), 1, 1));
}

TEST_CASE("conv3d matches the direct loop oracle") {
  Rng rng(13);
  struct Case {
    Shape x, w;
    int stride, pad;
  };
  const Case cases[] = {{{1, 2, 5, 5, 5}, {3, 2, 3, 3, 3}, 1, 1},
                        {{2, 3, 6, 4, 5}, {2, 3, 3, 3, 3}, 2, 1},
                        {{1, 2, 4, 4, 4}, {4, 2, 1, 1, 1}, 1, 0},
                        {{1, 1, 5, 6, 7}, {2, 1, 3, 1, 3}, 1, 0}};
  for (const auto& c : cases) {
    const Tensor x = random_tensor(c.x, rng), w = random_tensor(c.w, rng), b = random_tensor({c.w[0]}, rng);
    const Tensor out = conv3d(x, w, b, c.stride, c.pad);
    const auto Do = (c.x[2] + 2 * c.pad - c.w[2]) / c.stride + 1;
    const auto Ho = (c.x[3] + 2 * c.pad - c.w[3]) / c.stride + 1;
    const auto Wo = (c.x[4] + 2 * c.pad - c.w[4]) / c.stride + 1;
    REQUIRE(out.shape() == Shape{c.x[0], c.w[0], Do, Ho, Wo});
    std::size_t i = 0;
    for (std::int64_t n = 0; n < c.x[0]; ++n)
      for (std::int64_t f = 0; f < c.w[0]; ++f)
        for (std::int64_t z = 0; z < Do; ++z)
          for (std::int64_t y = 0; y < Ho; ++y)
            for (std::int64_t xx = 0; xx < Wo; ++xx, ++i)
              CHECK(out[i] == doctest::Approx(naive_conv_at(x, w, b, c.stride, c.pad, n, f, z, y, xx)).epsilon(1e-5));
  }
}

TEST_CASE("conv3d output shape formula over random shapes") {
  Rng rng(14);
  for (int trial = 0; trial < 30; ++trial) {
    const std::int64_t D = 1 + rng.below(7), H = 1 + rng.below(7), W = 1 + rng.below(7);
    const std::int64_t k = 1 + 2 * static_cast<std::int64_t>(rng.below(2));
    const int stride = 1 + static_cast<int>(rng.below(2)), pad = static_cast<int>(rng.below(2));
    if (D + 2 * pad < k || H + 2 * pad < k || W + 2 * pad < k) continue;
    const Tensor out = conv3d(Tensor({1, 2, D, H, W}, 1.0f), Tensor({3, 2, k, k, k}, 1.0f), Tensor::zeros({3}), stride, pad);
    CHECK(out.shape() == Shape{1, 3, (D + 2 * pad - k) / stride + 1, (H + 2 * pad - k) / stride + 1,
                               (W + 2 * pad - k) / stride + 1});
  }
}

TEST_CASE("trilinear upsampling") {
  const Tensor c = upsample_trilinear2x(Tensor({1, 2, 2, 3, 1}, 5.0f));
  CHECK(c.shape() == Shape{1, 2, 4, 6, 2});
  for (float v : c.data()) CHECK(v == 5.0f);

  // Every axis doubles, so the D profile is read at (z, 0, 0).
  const Tensor ramp = upsample_trilinear2x(Tensor({1, 1, 2, 1, 1}, {0.0f, 1.0f}));
  REQUIRE(ramp.shape() == Shape{1, 1, 4, 2, 2});
  CHECK(ramp[0] == 0.0f);
  CHECK(ramp[3 * 4] == 1.0f);
  for (int z = 1; z < 4; ++z) CHECK(ramp[z * 4] >= ramp[(z - 1) * 4]);

  // Closed-form trilinear oracle on a random 2x2x2 cube.
  Rng rng(15);
  const Tensor x = random_tensor({1, 1, 2, 2, 2}, rng);
  const Tensor up = upsample_trilinear2x(x);
  for (int z = 0; z < 4; ++z)
    for (int y = 0; y < 4; ++y)
      for (int xx = 0; xx < 4; ++xx) {
        const double tz = lerp_coord(z, 2), ty = lerp_coord(y, 2), tx = lerp_coord(xx, 2);
        double want = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int e = 0; e < 2; ++e)
              want += (a ? tz : 1 - tz) * (b ? ty : 1 - ty) * (e ? tx : 1 - tx) * x[(a * 2 + b) * 2 + e];
        CHECK(up[(z * 4 + y) * 4 + xx] == doctest::Approx(want).epsilon(1e-6));
      }
}

TEST_CASE("group norm") {
  const Tensor gamma = Tensor::ones({4}), beta0 = Tensor::zeros({4});
  const Tensor flat = group_norm(Tensor({2, 4, 3, 3, 3}, 2.5f), 2, gamma, beta0);
  for (float v : flat.data()) CHECK(v == 0.0f);
  const Tensor shifted = group_norm(Tensor({1, 4, 2, 2, 2}, -1.0f), 2, gamma, Tensor({4}, 7.0f));
  for (float v : shifted.data()) CHECK(v == 7.0f);
  CHECK_THROWS(group_norm(Tensor({1, 4, 2, 2, 2}), 3, gamma, beta0));

  Rng rng(16);
  const Tensor x = random_tensor({2, 4, 3, 2, 2}, rng, 3.0f);
  const Tensor y = group_norm(x, 2, gamma, beta0);
  const std::size_t group = 2 * 12;
  for (std::size_t g = 0; g < 4; ++g) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < group; ++i) mean += y[g * group + i];
    mean /= group;
    for (std::size_t i = 0; i < group; ++i) sq += (y[g * group + i] - mean) * (y[g * group + i] - mean);
    CHECK(std::fabs(mean) < 1e-4);
    CHECK(std::fabs(sq / group - 1.0) < 1e-4);
  }
  CHECK(default_group_count(16) == 8);
  CHECK(default_group_count(4) == 4);
  CHECK(default_group_count(12) == 1);
}

TEST_CASE("softmax") {
  const Tensor a = softmax(Tensor({1, 2}, {0, 0}), 1);
  CHECK(a[0] == 0.5f);
  CHECK(a[1] == 0.5f);
  const Tensor b = softmax(Tensor({1, 2}, {1000, 0}), 1);
  CHECK(b[0] == doctest::Approx(1.0));
  CHECK(b[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(b[1]));

  const Tensor c = softmax(Tensor({3}, {1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(c[i] == doctest::Approx(std::exp(i + 1.0) / z).epsilon(1e-6));

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({4, 7}, rng, 1e4f);
    const Tensor p = softmax(x, 1);
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int j = 0; j < 7; ++j) {
        CHECK(std::isfinite(p[r * 7 + j]));
        s += p[r * 7 + j];
      }
      CHECK(std::fabs(s - 1.0) < 1e-5);
    }
  }
}

TEST_CASE("reductions") {
  CHECK(sum(Tensor({3}, {1, 2, 3}))[0] == 6.0f);
  Tensor planted({1, 1, 3, 3, 3}, 0.0f);
  planted[13] = 9.0f;
  CHECK(reduce(ReduceOp::Max, planted, {2, 3, 4}).data()[0] == 9.0f);

  Rng rng(18);
  const Tensor x = random_tensor({2, 3}, rng);
  const Tensor m = reduce(ReduceOp::Mean, x, {1});
  CHECK(m.shape() == Shape{2});
  for (int r = 0; r < 2; ++r) CHECK(m[r] == doctest::Approx((double(x[r * 3]) + x[r * 3 + 1] + x[r * 3 + 2]) / 3).epsilon(1e-6));
  CHECK(reduce(ReduceOp::Sum, x, {0}, true).shape() == Shape{1, 3});
  CHECK_THROWS(reduce(ReduceOp::Sum, x, {2}));
  CHECK_THROWS(reduce(ReduceOp::Sum, x, {0, 0}));
}

TEST_CASE("concat, slice, reshape, permute, expand") {
  Rng rng(19);
  const Tensor a = random_tensor({1, 2}, rng), b = random_tensor({1, 3}, rng);
  const Tensor c = concat({a, b}, 1);
  CHECK(c.shape() == Shape{1, 5});
  CHECK(slice(c, 1, 0, 2).bit_equal(a));
  CHECK(slice(c, 1, 2, 3).bit_equal(b));
  CHECK(concat({a}, 1).bit_equal(a));
  CHECK_THROWS(concat({a, random_tensor({2, 2}, rng)}, 1));

  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 4; ++k) CHECK(p[(k * 2 + i) * 3 + j] == x[(i * 3 + j) * 4 + k]);
  CHECK(reshape(x, {6, 4}).shape() == Shape{6, 4});
  CHECK_THROWS(reshape(x, {5, 5}));
  const Tensor e = expand(Tensor({2, 1}, {1, 2}), {2, 3});
  CHECK(e[0] == 1.0f);
  CHECK(e[2] == 1.0f);
  CHECK(e[3] == 2.0f);
  CHECK(e[5] == 2.0f);
}

TEST_CASE("nll loss of a uniform prediction is ln 2") {
  const Tensor p({1, 2}, {0.5f, 0.5f});
  const int label = 1;
  CHECK(nll_loss(p, std::span(&label, 1))[0] == doctest::Approx(0.6931).epsilon(1e-4));
}

TEST_CASE("backward examples") {
  Tensor w = Tensor({2, 3}, 0.7f);
  w.set_requires_grad(true);
  {
    Tape tape;
    TapeScope rec(tape);
    tape.backward(sum(w));
  }
  for (float g : w.grad()) CHECK(g == 1.0f);

  Tensor v({2}, {1, -2});
  v.set_requires_grad(true);
  {
    Tape tape;
    TapeScope rec(tape);
    tape.backward(sum(mul(v, v)));
  }
  CHECK(v.grad()[0] == 2.0f);
  CHECK(v.grad()[1] == -4.0f);

  // Parameters the loss never touches end with zero gradient.
  Tensor unused({3}, 1.0f);
  unused.set_requires_grad(true);
  unused.zero_grad();
  for (float g : unused.grad()) CHECK(g == 0.0f);

  Tape tape;
  Tensor wide({2}, 1.0f);
  wide.set_requires_grad(true);
  Tensor y;
  {
    TapeScope rec(tape);
    y = mul(wide, wide);
  }
  CHECK_THROWS(tape.backward(y));
}

TEST_CASE("no recording outside a tape scope or under NoGradScope") {
  Tensor w({2}, 1.0f);
  w.set_requires_grad(true);
  Tape tape;
  {
    TapeScope rec(tape);
    NoGradScope off;
    (void)mul(w, w);
  }
  CHECK(tape.size() == 0);
  {
    TapeScope rec(tape);
    (void)mul(w, w);
  }
  CHECK(tape.size() == 1);
}

TEST_CASE("forward values are finite for finite inputs") {
  Rng rng(20);
  const Tensor x = random_tensor({1, 2, 4, 4, 4}, rng, 50.0f);
  const Tensor w = random_tensor({2, 2, 3, 3, 3}, rng);
  const Tensor y = group_norm(conv3d(x, w, Tensor::zeros({2}), 1, 1), 2, Tensor::ones({2}), Tensor::zeros({2}));
  const Tensor out = sigmoid(upsample_trilinear2x(y));
  for (float v : out.data()) CHECK(std::isfinite(v));
}

TEST_CASE("operations are deterministic") {
  auto run = [] {
    Rng rng(21);
    const Tensor x = random_tensor({2, 3, 4, 4, 4}, rng);
    const Tensor w = random_tensor({4, 3, 3, 3, 3}, rng);
    Tensor y = conv3d(x, w, Tensor::zeros({4}), 1, 1);
    y = group_norm(y, 2, Tensor::ones({4}), Tensor::zeros({4}));
    return reduce(ReduceOp::Mean, upsample_trilinear2x(y), {2, 3, 4});
  };
  CHECK(run().bit_equal(run()));
}
