// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "masan/tensor.hpp"

namespace masan {

/// Central-difference estimate of df/dx for every coordinate of x.
/// `x` is not modified; f receives perturbed copies.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, float eps = 1e-3f);

/// Central differences on selected coordinates of `x`, perturbed in place and
/// restored afterwards. Used for parameters buried inside a model.
std::vector<double> finite_diff_coordinates(const std::function<double()>& f, const Tensor& x,
                                            std::span<const std::size_t> coords, float eps = 1e-3f);

struct DirectionalProbe {
  double numeric = 0.0;                   // (f(x + eps d) - f(x - eps d)) / (2 eps)
  std::vector<double> effective_direction;  // realised float32 displacement / (2 eps)
};

/// Central difference of f along `direction`, perturbing `x` in place and
/// restoring it bit-exactly. Dot the analytic gradient with
/// `effective_direction` to compare against `numeric`.
DirectionalProbe finite_diff_directional(const std::function<double()>& f, const Tensor& x,
                                         std::span<const float> direction, float eps = 1e-3f);

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace masan
