// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "masan/tensor.hpp"

namespace masan {

// Pointwise. Binary ops require identical shapes; there is no implicit
// broadcasting, callers expand() explicitly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor scale(const Tensor& a, float c);

/// [m,k]·[k,n] -> [m,n], or batched [b,m,k]·[b,k,n] -> [b,m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// x [N,C,D,H,W], w [F,C,kd,kh,kw] (odd extents), bias [F]; zero padding.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);

/// Doubles D, H and W with corner-aligned trilinear interpolation.
Tensor upsample_trilinear2x(const Tensor& x);

/// x [N,C,...]; per-sample, per-group standardization followed by a
/// per-channel affine map. Statistics are accumulated in double.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

/// Group count used throughout the networks: min(8, C) when it divides C, else 1.
int default_group_count(std::int64_t channels);

Tensor softmax(const Tensor& x, int axis);

enum class ReduceOp { Sum, Mean, Max };

/// Reduces over `axes` in flat input order. Max routes its gradient to the
/// first maximal element.
Tensor reduce(ReduceOp op, const Tensor& x, std::vector<int> axes, bool keep_dims = false);
Tensor sum(const Tensor& x);  // all elements -> [1]

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& order);
/// Broadcasts unit extents of x up to `shape` (same rank required).
Tensor expand(const Tensor& x, const Shape& shape);

/// Mean negative log-probability of the labelled class; probabilities are
/// clamped below at `clamp` before the log.
Tensor nll_loss(const Tensor& probs, std::span<const int> labels, float clamp = 1e-12f);

}  // namespace masan
