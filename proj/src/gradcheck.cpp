// Copyright (c) 2026, masan-desk contributors
// SPDX-License-Identifier: Apache-2.0

#include "masan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace masan {

namespace {
double central_difference(const std::function<double()>& f, float& slot, float eps) {
  const float original = slot;
  const float hi = original + eps;
  const float lo = original - eps;
  slot = hi;
  const double f_hi = f();
  slot = lo;
  const double f_lo = f();
  slot = original;
  // Use the representable step, not the nominal one.
  return (f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
}
}  // namespace

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, float eps) {
  if (!(eps > 0.0f)) throw std::invalid_argument("finite_diff_gradient: eps must be > 0");
  Tensor probe = x.detach();
  Tensor g(x.shape());
  for (std::size_t i = 0; i < probe.numel(); ++i)
    g[i] = static_cast<float>(central_difference([&] { return f(probe); }, probe[i], eps));
  return g;
}

std::vector<double> finite_diff_coordinates(const std::function<double()>& f, const Tensor& x,
                                            std::span<const std::size_t> coords, float eps) {
  if (!(eps > 0.0f)) throw std::invalid_argument("finite_diff_coordinates: eps must be > 0");
  std::vector<double> out;
  out.reserve(coords.size());
  for (std::size_t i : coords) out.push_back(central_difference(f, x[i], eps));
  return out;
}

DirectionalProbe finite_diff_directional(const std::function<double()>& f, const Tensor& x,
                                         std::span<const float> direction, float eps) {
  if (!(eps > 0.0f)) throw std::invalid_argument("finite_diff_directional: eps must be > 0");
  if (direction.size() != x.numel()) throw std::invalid_argument("finite_diff_directional: direction length mismatch");
  const std::vector<float> original(x.data().begin(), x.data().end());
  std::vector<float> hi(original.size()), lo(original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    hi[i] = original[i] + eps * direction[i];
    lo[i] = original[i] - eps * direction[i];
  }
  auto data = x.data();
  std::copy(hi.begin(), hi.end(), data.begin());
  const double f_hi = f();
  std::copy(lo.begin(), lo.end(), data.begin());
  const double f_lo = f();
  std::copy(original.begin(), original.end(), data.begin());

  DirectionalProbe probe;
  const double two_eps = 2.0 * static_cast<double>(eps);
  probe.numeric = (f_hi - f_lo) / two_eps;
  probe.effective_direction.resize(original.size());
  for (std::size_t i = 0; i < original.size(); ++i)
    probe.effective_direction[i] = (static_cast<double>(hi[i]) - static_cast<double>(lo[i])) / two_eps;
  return probe;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace masan
