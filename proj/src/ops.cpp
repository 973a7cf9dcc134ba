// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace masan {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor& tracked(Tensor& out) { return out.set_requires_grad(true); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

int normalize_axis(int axis, std::size_t ndim, const char* op) {
  const int n = static_cast<int>(ndim);
  if (axis < 0) axis += n;
  if (axis < 0 || axis >= n)
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                " out of range for rank " + std::to_string(n));
  return axis;
}

std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int d = static_cast<int>(s.size()) - 2; d >= 0; --d) st[d] = st[d + 1] * s[d + 1];
  return st;
}

// Walks a row-major index space of `shape` while maintaining a secondary
// linear index driven by `mapped_strides`.
template <typename Fn>
void walk(const Shape& shape, const std::vector<std::int64_t>& mapped_strides, Fn&& fn) {
  const std::size_t nd = shape.size();
  const std::int64_t n = numel_of(shape);
  std::vector<std::int64_t> coord(nd, 0);
  std::int64_t mapped = 0;
  for (std::int64_t idx = 0; idx < n; ++idx) {
    fn(idx, mapped);
    for (int d = static_cast<int>(nd) - 1; d >= 0; --d) {
      ++coord[d];
      mapped += mapped_strides[d];
      if (coord[d] < shape[d]) break;
      mapped -= mapped_strides[d] * shape[d];
      coord[d] = 0;
    }
  }
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd bwd) {
  Tensor out(a.shape());
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (tracking({&a})) {
    tracked(out);
    active_tape()->record([a, out, bwd]() mutable {
      auto ga = a.grad();
      auto go = out.grad();
      auto x = a.data();
      auto y = out.data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += bwd(x[i], y[i], go[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto x = a.data(), z = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
  if (tracking({&a, &b})) {
    tracked(out);
    active_tape()->record([a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto x = a.data(), z = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
  if (tracking({&a, &b})) {
    tracked(out);
    active_tape()->record([a, b, out]() mutable {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto x = a.data(), z = b.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  if (tracking({&a, &b})) {
    tracked(out);
    active_tape()->record([a, b, out]() mutable {
      auto go = out.grad();
      auto x = a.data(), z = b.data();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * z[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float, float g) { return x > 0.0f ? g : 0.0f; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](float x) {
        // Split by sign so exp() never overflows.
        if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
        const float e = std::exp(x);
        return e / (1.0f + e);
      },
      [](float, float y, float g) { return g * y * (1.0f - y); });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](float x) { return std::fabs(x); },
      [](float x, float, float g) { return x > 0.0f ? g : (x < 0.0f ? -g : 0.0f); });
}

Tensor scale(const Tensor& a, float c) {
  return unary(
      a, [c](float x) { return c * x; }, [c](float, float, float g) { return c * g; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool batched = a.ndim() == 3;
  if (!((a.ndim() == 2 && b.ndim() == 2) || (a.ndim() == 3 && b.ndim() == 3)))
    throw std::invalid_argument("matmul: expected 2-D or batched 3-D operands, got " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t batch = batched ? a.dim(0) : 1;
  const std::size_t o = batched ? 1 : 0;
  const std::int64_t m = a.dim(o), k = a.dim(o + 1), n = b.dim(o + 1);
  if (b.dim(o) != k || (batched && b.dim(0) != batch))
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  Tensor out(batched ? Shape{batch, m, n} : Shape{m, n});
  for (std::int64_t i = 0; i < batch; ++i) {
    ConstMapMat A(a.data().data() + i * m * k, m, k);
    ConstMapMat B(b.data().data() + i * k * n, k, n);
    MapMat C(out.data().data() + i * m * n, m, n);
    C.noalias() = A * B;
  }
  if (tracking({&a, &b})) {
    tracked(out);
    active_tape()->record([a, b, out, batch, m, k, n]() mutable {
      for (std::int64_t i = 0; i < batch; ++i) {
        ConstMapMat G(out.grad().data() + i * m * n, m, n);
        if (a.requires_grad()) {
          MapMat GA(a.grad().data() + i * m * k, m, k);
          ConstMapMat B(b.data().data() + i * k * n, k, n);
          GA.noalias() += G * B.transpose();
        }
        if (b.requires_grad()) {
          MapMat GB(b.grad().data() + i * k * n, k, n);
          ConstMapMat A(a.data().data() + i * m * k, m, k);
          GB.noalias() += A.transpose() * G;
        }
      }
    });
  }
  return out;
}

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
  if (x.ndim() != 5 || w.ndim() != 5)
    throw std::invalid_argument("conv3d: expected x [N,C,D,H,W] and w [F,C,kd,kh,kw], got " +
                                shape_str(x.shape()) + " and " + shape_str(w.shape()));
  if (stride < 1 || padding < 0) throw std::invalid_argument("conv3d: stride >= 1 and padding >= 0 required");
  const std::int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::int64_t F = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
  if (w.dim(1) != C)
    throw std::invalid_argument("conv3d: channel mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(w.shape()));
  if (kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("conv3d: kernel extents must be odd, got " + shape_str(w.shape()));
  if (D + 2 * padding < kd || H + 2 * padding < kh || W + 2 * padding < kw)
    throw std::invalid_argument("conv3d: kernel " + shape_str(w.shape()) +
                                " larger than padded input " + shape_str(x.shape()));
  if (bias.ndim() != 1 || bias.dim(0) != F)
    throw std::invalid_argument("conv3d: bias must be [" + std::to_string(F) + "], got " +
                                shape_str(bias.shape()));

  const std::int64_t Do = (D + 2 * padding - kd) / stride + 1;
  const std::int64_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::int64_t Wo = (W + 2 * padding - kw) / stride + 1;
  const std::int64_t P = Do * Ho * Wo;
  const std::int64_t K = C * kd * kh * kw;

  // The input is zero-padded once so that column extraction needs no bounds
  // checks. cols is one K x (N*P) matrix for the whole batch, kept for the
  // backward pass; column n*P + p is output voxel p of sample n.
  const std::int64_t Dp = D + 2 * padding, Hp = H + 2 * padding, Wp = W + 2 * padding;
  const std::int64_t pad_vol = Dp * Hp * Wp;
  const std::int64_t NP = N * P;
  std::vector<float> xp(static_cast<std::size_t>(N * C * pad_vol), 0.0f);
  const float* xd = x.data().data();
  for (std::int64_t nc = 0; nc < N * C; ++nc)
    for (std::int64_t z = 0; z < D; ++z)
      for (std::int64_t y = 0; y < H; ++y)
        std::copy_n(xd + (nc * D + z) * H * W + y * W, W,
                    xp.data() + nc * pad_vol + ((z + padding) * Hp + y + padding) * Wp + padding);

  std::shared_ptr<float[]> cols(new float[static_cast<std::size_t>(K * NP)]);
  for (std::int64_t n = 0; n < N; ++n) {
    std::int64_t row = 0;
    for (std::int64_t c = 0; c < C; ++c) {
      const float* xc = xp.data() + (n * C + c) * pad_vol;
      for (std::int64_t a = 0; a < kd; ++a)
        for (std::int64_t b = 0; b < kh; ++b)
          for (std::int64_t e = 0; e < kw; ++e, ++row) {
            float* dst = cols.get() + row * NP + n * P;
            for (std::int64_t oz = 0; oz < Do; ++oz)
              for (std::int64_t oy = 0; oy < Ho; ++oy, dst += Wo) {
                const float* src = xc + ((oz * stride + a) * Hp + oy * stride + b) * Wp + e;
                for (std::int64_t ox = 0; ox < Wo; ++ox) dst[ox] = src[ox * stride];
              }
          }
    }
  }

  RowMat Y(F, NP);
  Y.noalias() = ConstMapMat(w.data().data(), F, K) * ConstMapMat(cols.get(), K, NP);
  Tensor out(Shape{N, F, Do, Ho, Wo});
  float* od = out.data().data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t f = 0; f < F; ++f) {
      const float bf = bias[static_cast<std::size_t>(f)];
      const float* src = Y.data() + f * NP + n * P;
      float* dst = od + (n * F + f) * P;
      for (std::int64_t p = 0; p < P; ++p) dst[p] = src[p] + bf;
    }

  if (tracking({&x, &w, &bias})) {
    tracked(out);
    active_tape()->record([=]() mutable {
      const float* go = out.grad().data();
      RowMat G(F, NP);
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t f = 0; f < F; ++f)
          std::copy(go + (n * F + f) * P, go + (n * F + f + 1) * P, G.data() + f * NP + n * P);
      if (w.requires_grad()) {
        MapMat GW(w.grad().data(), F, K);
        GW.noalias() += G * ConstMapMat(cols.get(), K, NP).transpose();
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::int64_t f = 0; f < F; ++f) {
          double acc = 0.0;
          for (std::int64_t q = 0; q < NP; ++q) acc += G(f, q);
          gb[f] += static_cast<float>(acc);
        }
      }
      if (x.requires_grad()) {
        RowMat DC(K, NP);
        DC.noalias() = ConstMapMat(w.data().data(), F, K).transpose() * G;
        std::vector<float> gp(static_cast<std::size_t>(N * C * pad_vol), 0.0f);
        for (std::int64_t n = 0; n < N; ++n) {
          std::int64_t row = 0;
          for (std::int64_t c = 0; c < C; ++c) {
            float* gc = gp.data() + (n * C + c) * pad_vol;
            for (std::int64_t a = 0; a < kd; ++a)
              for (std::int64_t b = 0; b < kh; ++b)
                for (std::int64_t e = 0; e < kw; ++e, ++row) {
                  const float* src = DC.data() + row * NP + n * P;
                  for (std::int64_t oz = 0; oz < Do; ++oz)
                    for (std::int64_t oy = 0; oy < Ho; ++oy, src += Wo) {
                      float* dst = gc + ((oz * stride + a) * Hp + oy * stride + b) * Wp + e;
                      for (std::int64_t ox = 0; ox < Wo; ++ox) dst[ox * stride] += src[ox];
                    }
                }
          }
        }
        float* gx = x.grad().data();
        for (std::int64_t nc = 0; nc < N * C; ++nc)
          for (std::int64_t z = 0; z < D; ++z)
            for (std::int64_t y = 0; y < H; ++y) {
              const float* src = gp.data() + nc * pad_vol + ((z + padding) * Hp + y + padding) * Wp + padding;
              float* dst = gx + (nc * D + z) * H * W + y * W;
              for (std::int64_t i = 0; i < W; ++i) dst[i] += src[i];
            }
      }
    });
  }
  return out;
}

namespace {
struct Lerp {
  std::int64_t lo, hi;
  float w;  // weight of `hi`
};

std::vector<Lerp> corner_aligned_table(std::int64_t n) {
  const std::int64_t m = 2 * n;
  std::vector<Lerp> t(static_cast<std::size_t>(m));
  for (std::int64_t o = 0; o < m; ++o) {
    if (n == 1) {
      t[o] = {0, 0, 0.0f};
      continue;
    }
    const double pos = static_cast<double>(o) * static_cast<double>(n - 1) / static_cast<double>(m - 1);
    std::int64_t lo = static_cast<std::int64_t>(std::floor(pos));
    lo = std::min(lo, n - 1);
    const std::int64_t hi = std::min(lo + 1, n - 1);
    t[o] = {lo, hi, static_cast<float>(pos - static_cast<double>(lo))};
  }
  return t;
}
}  // namespace

Tensor upsample_trilinear2x(const Tensor& x) {
  if (x.ndim() != 5)
    throw std::invalid_argument("upsample_trilinear2x: expected [N,C,D,H,W], got " + shape_str(x.shape()));
  const std::int64_t NC = x.dim(0) * x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const auto tz = corner_aligned_table(D), ty = corner_aligned_table(H), tx = corner_aligned_table(W);
  const std::int64_t D2 = 2 * D, H2 = 2 * H, W2 = 2 * W;
  Tensor out(Shape{x.dim(0), x.dim(1), D2, H2, W2});
  const float* src = x.data().data();
  float* dst = out.data().data();
  for (std::int64_t q = 0; q < NC; ++q) {
    const float* s = src + q * D * H * W;
    float* d = dst + q * D2 * H2 * W2;
    for (std::int64_t z = 0; z < D2; ++z)
      for (std::int64_t y = 0; y < H2; ++y)
        for (std::int64_t xx = 0; xx < W2; ++xx) {
          const Lerp& a = tz[z];
          const Lerp& b = ty[y];
          const Lerp& c = tx[xx];
          auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) { return s[(i * H + j) * W + k]; };
          const float c00 = (1 - c.w) * at(a.lo, b.lo, c.lo) + c.w * at(a.lo, b.lo, c.hi);
          const float c01 = (1 - c.w) * at(a.lo, b.hi, c.lo) + c.w * at(a.lo, b.hi, c.hi);
          const float c10 = (1 - c.w) * at(a.hi, b.lo, c.lo) + c.w * at(a.hi, b.lo, c.hi);
          const float c11 = (1 - c.w) * at(a.hi, b.hi, c.lo) + c.w * at(a.hi, b.hi, c.hi);
          const float c0 = (1 - b.w) * c00 + b.w * c01;
          const float c1 = (1 - b.w) * c10 + b.w * c11;
          d[(z * H2 + y) * W2 + xx] = (1 - a.w) * c0 + a.w * c1;
        }
  }
  if (tracking({&x})) {
    tracked(out);
    active_tape()->record([=]() mutable {
      const float* g = out.grad().data();
      float* gx = x.grad().data();
      for (std::int64_t q = 0; q < NC; ++q) {
        const float* go = g + q * D2 * H2 * W2;
        float* gs = gx + q * D * H * W;
        for (std::int64_t z = 0; z < D2; ++z)
          for (std::int64_t y = 0; y < H2; ++y)
            for (std::int64_t xx = 0; xx < W2; ++xx) {
              const Lerp& a = tz[z];
              const Lerp& b = ty[y];
              const Lerp& c = tx[xx];
              const float v = go[(z * H2 + y) * W2 + xx];
              auto put = [&](std::int64_t i, std::int64_t j, std::int64_t k, float wgt) {
                gs[(i * H + j) * W + k] += wgt * v;
              };
              put(a.lo, b.lo, c.lo, (1 - a.w) * (1 - b.w) * (1 - c.w));
              put(a.lo, b.lo, c.hi, (1 - a.w) * (1 - b.w) * c.w);
              put(a.lo, b.hi, c.lo, (1 - a.w) * b.w * (1 - c.w));
              put(a.lo, b.hi, c.hi, (1 - a.w) * b.w * c.w);
              put(a.hi, b.lo, c.lo, a.w * (1 - b.w) * (1 - c.w));
              put(a.hi, b.lo, c.hi, a.w * (1 - b.w) * c.w);
              put(a.hi, b.hi, c.lo, a.w * b.w * (1 - c.w));
              put(a.hi, b.hi, c.hi, a.w * b.w * c.w);
            }
      }
    });
  }
  return out;
}

int default_group_count(std::int64_t channels) {
  const std::int64_t g = std::min<std::int64_t>(8, channels);
  return channels % g == 0 ? static_cast<int>(g) : 1;
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta, float eps) {
  if (x.ndim() < 2) throw std::invalid_argument("group_norm: expected [N,C,...], got " + shape_str(x.shape()));
  if (eps <= 0.0f) throw std::invalid_argument("group_norm: eps must be > 0");
  const std::int64_t N = x.dim(0), C = x.dim(1);
  if (groups < 1 || C % groups != 0)
    throw std::invalid_argument("group_norm: " + std::to_string(C) + " channels not divisible by " +
                                std::to_string(groups) + " groups");
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw std::invalid_argument("group_norm: gamma/beta must be [" + std::to_string(C) + "]");
  const std::int64_t S = static_cast<std::int64_t>(x.numel()) / (N * C);
  const std::int64_t Cg = C / groups;
  const std::int64_t M = Cg * S;

  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N * groups));
  const float* xd = x.data().data();
  float* yd = out.data().data();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t g = 0; g < groups; ++g) {
      const std::int64_t base = (n * C + g * Cg) * S;
      double mean = 0.0;
      for (std::int64_t i = 0; i < M; ++i) mean += xd[base + i];
      mean /= static_cast<double>(M);
      double var = 0.0;
      for (std::int64_t i = 0; i < M; ++i) {
        const double d = xd[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(M);
      const double r = 1.0 / std::sqrt(var + static_cast<double>(eps));
      (*rstd)[n * groups + g] = r;
      for (std::int64_t c = 0; c < Cg; ++c) {
        const std::int64_t ch = g * Cg + c;
        for (std::int64_t s = 0; s < S; ++s) {
          const std::int64_t i = base + c * S + s;
          const float h = static_cast<float>((xd[i] - mean) * r);
          (*xhat)[i] = h;
          yd[i] = gamma[ch] * h + beta[ch];
        }
      }
    }

  if (tracking({&x, &gamma, &beta})) {
    tracked(out);
    active_tape()->record([=]() mutable {
      const float* go = out.grad().data();
      for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t g = 0; g < groups; ++g) {
          const std::int64_t base = (n * C + g * Cg) * S;
          double s1 = 0.0, s2 = 0.0;
          for (std::int64_t c = 0; c < Cg; ++c) {
            const std::int64_t ch = g * Cg + c;
            double sg = 0.0, sb = 0.0;
            for (std::int64_t s = 0; s < S; ++s) {
              const std::int64_t i = base + c * S + s;
              const double dh = static_cast<double>(go[i]) * gamma[ch];
              s1 += dh;
              s2 += dh * (*xhat)[i];
              sg += static_cast<double>(go[i]) * (*xhat)[i];
              sb += go[i];
            }
            if (gamma.requires_grad()) gamma.grad()[ch] += static_cast<float>(sg);
            if (beta.requires_grad()) beta.grad()[ch] += static_cast<float>(sb);
          }
          if (x.requires_grad()) {
            float* gx = x.grad().data();
            const double r = (*rstd)[n * groups + g];
            const double inv_m = 1.0 / static_cast<double>(M);
            for (std::int64_t c = 0; c < Cg; ++c) {
              const std::int64_t ch = g * Cg + c;
              for (std::int64_t s = 0; s < S; ++s) {
                const std::int64_t i = base + c * S + s;
                const double dh = static_cast<double>(go[i]) * gamma[ch];
                gx[i] += static_cast<float>(r * (dh - inv_m * s1 - (*xhat)[i] * inv_m * s2));
              }
            }
          }
        }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  axis = normalize_axis(axis, x.ndim(), "softmax");
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
  const std::int64_t L = x.dim(axis);
  Tensor out(x.shape());
  const float* xd = x.data().data();
  float* yd = out.data().data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * L * inner + i;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::int64_t l = 0; l < L; ++l) mx = std::max(mx, xd[base + l * inner]);
      double total = 0.0;
      for (std::int64_t l = 0; l < L; ++l) {
        const float e = std::exp(xd[base + l * inner] - mx);
        yd[base + l * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::int64_t l = 0; l < L; ++l)
        yd[base + l * inner] = static_cast<float>(yd[base + l * inner] * inv);
    }
  if (tracking({&x})) {
    tracked(out);
    active_tape()->record([=]() mutable {
      const float* go = out.grad().data();
      const float* yd = out.data().data();
      float* gx = x.grad().data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
          const std::int64_t base = o * L * inner + i;
          double dot = 0.0;
          for (std::int64_t l = 0; l < L; ++l) dot += static_cast<double>(go[base + l * inner]) * yd[base + l * inner];
          for (std::int64_t l = 0; l < L; ++l) {
            const std::int64_t k = base + l * inner;
            gx[k] += static_cast<float>(yd[k] * (go[k] - dot));
          }
        }
    });
  }
  return out;
}

Tensor reduce(ReduceOp op, const Tensor& x, std::vector<int> axes, bool keep_dims) {
  const std::size_t nd = x.ndim();
  std::vector<bool> reduced(nd, false);
  for (int& a : axes) {
    a = normalize_axis(a, nd, "reduce");
    if (reduced[a]) throw std::invalid_argument("reduce: duplicate axis " + std::to_string(a));
    reduced[a] = true;
  }
  Shape kept_shape(nd);
  Shape out_shape;
  std::int64_t count = 1;
  for (std::size_t d = 0; d < nd; ++d) {
    kept_shape[d] = reduced[d] ? 1 : x.dim(d);
    if (reduced[d])
      count *= x.dim(d);
    else
      out_shape.push_back(x.dim(d));
    if (keep_dims && reduced[d]) out_shape.push_back(1);
  }
  if (keep_dims) out_shape = kept_shape;
  if (out_shape.empty()) out_shape = {1};

  auto kept_strides = strides_of(kept_shape);
  std::vector<std::int64_t> mapped(nd);
  for (std::size_t d = 0; d < nd; ++d) mapped[d] = reduced[d] ? 0 : kept_strides[d];

  Tensor out(out_shape);
  const std::size_t n_out = out.numel();
  const float* xd = x.data().data();
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  if (op == ReduceOp::Max) {
    argmax->assign(n_out, -1);
    auto y = out.data();
    walk(x.shape(), mapped, [&](std::int64_t idx, std::int64_t o) {
      auto& am = (*argmax)[o];
      if (am < 0 || xd[idx] > y[o]) {
        y[o] = xd[idx];
        am = idx;
      }
    });
  } else {
    std::vector<double> acc(n_out, 0.0);
    walk(x.shape(), mapped, [&](std::int64_t idx, std::int64_t o) { acc[o] += xd[idx]; });
    auto y = out.data();
    for (std::size_t o = 0; o < n_out; ++o)
      y[o] = static_cast<float>(op == ReduceOp::Mean ? acc[o] / static_cast<double>(count) : acc[o]);
  }

  if (tracking({&x})) {
    tracked(out);
    active_tape()->record([=]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      if (op == ReduceOp::Max) {
        for (std::size_t o = 0; o < go.size(); ++o) gx[(*argmax)[o]] += go[o];
        return;
      }
      const float f = op == ReduceOp::Mean ? 1.0f / static_cast<float>(count) : 1.0f;
      walk(x.shape(), mapped, [&](std::int64_t idx, std::int64_t o) { gx[idx] += f * go[o]; });
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  std::vector<int> axes(x.ndim());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(ReduceOp::Sum, x, axes, false);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const Tensor& first = xs.front();
  axis = normalize_axis(axis, first.ndim(), "concat");
  Shape out_shape = first.shape();
  out_shape[axis] = 0;
  for (const Tensor& t : xs) {
    if (t.ndim() != first.ndim())
      throw std::invalid_argument("concat: rank mismatch " + shape_str(first.shape()) + " vs " + shape_str(t.shape()));
    for (std::size_t d = 0; d < t.ndim(); ++d)
      if (static_cast<int>(d) != axis && t.dim(d) != first.dim(d))
        throw std::invalid_argument("concat: incompatible shapes " + shape_str(first.shape()) + " and " +
                                    shape_str(t.shape()) + " along axis " + std::to_string(axis));
    out_shape[axis] += t.dim(axis);
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first.dim(d);
  for (std::size_t d = axis + 1; d < first.ndim(); ++d) inner *= first.dim(d);
  const std::int64_t total = out_shape[axis];

  Tensor out(out_shape);
  float* yd = out.data().data();
  std::int64_t offset = 0;
  for (const Tensor& t : xs) {
    const std::int64_t len = t.dim(axis) * inner;
    const float* src = t.data().data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(src + o * len, src + (o + 1) * len, yd + o * total * inner + offset);
    offset += len;
  }

  bool any = false;
  for (const Tensor& t : xs) any = any || tracking({&t});
  if (any) {
    tracked(out);
    active_tape()->record([xs, out, outer, inner, total, axis]() mutable {
      const float* go = out.grad().data();
      std::int64_t offset = 0;
      for (const Tensor& t : xs) {
        const std::int64_t len = t.dim(axis) * inner;
        if (t.requires_grad()) {
          float* gt = t.grad().data();
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t i = 0; i < len; ++i) gt[o * len + i] += go[o * total * inner + offset + i];
        }
        offset += len;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, x.ndim(), "slice");
  if (start < 0 || length < 1 || start + length > x.dim(axis))
    throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                ") outside axis extent " + std::to_string(x.dim(axis)));
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (std::size_t d = axis + 1; d < x.ndim(); ++d) inner *= x.dim(d);
  const std::int64_t full = x.dim(axis) * inner;
  const std::int64_t len = length * inner;
  Shape s = x.shape();
  s[axis] = length;
  Tensor out(s);
  const float* xd = x.data().data();
  float* yd = out.data().data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy(xd + o * full + start * inner, xd + o * full + start * inner + len, yd + o * len);
  if (tracking({&x})) {
    tracked(out);
    active_tape()->record([=]() mutable {
      const float* go = out.grad().data();
      float* gx = x.grad().data();
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < len; ++i) gx[o * full + start * inner + i] += go[o * len + i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != static_cast<std::int64_t>(x.numel()))
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out(std::move(shape), std::vector<float>(x.data().begin(), x.data().end()));
  if (tracking({&x})) {
    tracked(out);
    active_tape()->record([x, out]() mutable {
      auto go = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& order) {
  const std::size_t nd = x.ndim();
  if (order.size() != nd) throw std::invalid_argument("permute: order rank mismatch");
  std::vector<bool> seen(nd, false);
  Shape out_shape(nd);
  auto in_strides = strides_of(x.shape());
  std::vector<std::int64_t> mapped(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    const int d = normalize_axis(order[i], nd, "permute");
    if (seen[d]) throw std::invalid_argument("permute: repeated axis");
    seen[d] = true;
    out_shape[i] = x.dim(d);
    mapped[i] = in_strides[d];
  }
  Tensor out(out_shape);
  const float* xd = x.data().data();
  float* yd = out.data().data();
  walk(out_shape, mapped, [&](std::int64_t o, std::int64_t i) { yd[o] = xd[i]; });
  if (tracking({&x})) {
    tracked(out);
    active_tape()->record([x, out, out_shape, mapped]() mutable {
      const float* go = out.grad().data();
      float* gx = x.grad().data();
      walk(out_shape, mapped, [&](std::int64_t o, std::int64_t i) { gx[i] += go[o]; });
    });
  }
  return out;
}

Tensor expand(const Tensor& x, const Shape& shape) {
  if (shape.size() != x.ndim())
    throw std::invalid_argument("expand: rank mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  auto in_strides = strides_of(x.shape());
  std::vector<std::int64_t> mapped(shape.size());
  for (std::size_t d = 0; d < shape.size(); ++d) {
    if (x.dim(d) != shape[d] && x.dim(d) != 1)
      throw std::invalid_argument("expand: cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
    mapped[d] = x.dim(d) == 1 ? 0 : in_strides[d];
  }
  Tensor out(shape);
  const float* xd = x.data().data();
  float* yd = out.data().data();
  walk(shape, mapped, [&](std::int64_t o, std::int64_t i) { yd[o] = xd[i]; });
  if (tracking({&x})) {
    tracked(out);
    active_tape()->record([x, out, shape, mapped]() mutable {
      const float* go = out.grad().data();
      float* gx = x.grad().data();
      walk(shape, mapped, [&](std::int64_t o, std::int64_t i) { gx[i] += go[o]; });
    });
  }
  return out;
}

Tensor nll_loss(const Tensor& probs, std::span<const int> labels, float clamp) {
  if (probs.ndim() != 2) throw std::invalid_argument("nll_loss: probs must be [N,C], got " + shape_str(probs.shape()));
  const std::int64_t N = probs.dim(0), C = probs.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != N)
    throw std::invalid_argument("nll_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(N) +
                                " rows");
  for (int y : labels)
    if (y < 0 || y >= C)
      throw std::invalid_argument("nll_loss: label " + std::to_string(y) + " outside [0, " + std::to_string(C) + ")");
  std::vector<int> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (std::int64_t n = 0; n < N; ++n) total -= std::log(std::max(probs[n * C + lab[n]], clamp));
  Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(N)));
  if (tracking({&probs})) {
    tracked(out);
    active_tape()->record([probs, out, lab, N, C, clamp]() mutable {
      const float g = out.grad()[0];
      auto gp = probs.grad();
      for (std::int64_t n = 0; n < N; ++n) {
        const float p = probs[n * C + lab[n]];
        if (p > clamp) gp[n * C + lab[n]] -= g / (static_cast<float>(N) * p);
      }
    });
  }
  return out;
}

}  // namespace masan
