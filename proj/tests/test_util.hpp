// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "cimste/noise.hpp"
#include "cimste/tensor.hpp"

namespace testutil {

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed,
                                         std::uint64_t a = 0, double scale = 1.0) {
  std::vector<double> v(n);
  cimste::noise::stream::fill_standard_normals(seed, cimste::noise::stream::Domain::kDiag,
                                               a, 0, v);
  for (double& x : v) x *= scale;
  return v;
}

inline cimste::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                                    std::uint64_t a = 0, bool requires_grad = false,
                                    double scale = 1.0) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return cimste::Tensor(std::move(shape), random_values(n, seed, a, scale), requires_grad);
}

// Central finite differences of a scalar-valued rebuild of the graph with
// respect to one leaf tensor's elements.
inline std::vector<double> fd_gradient(const std::function<double()>& loss_value,
                                       cimste::Tensor& leaf, double h) {
  std::vector<double> g(leaf.numel());
  double* p = leaf.mutable_data();
  for (std::size_t k = 0; k < leaf.numel(); ++k) {
    const double saved = p[k];
    p[k] = saved + h;
    const double lp = loss_value();
    p[k] = saved - h;
    const double lm = loss_value();
    p[k] = saved;
    g[k] = (lp - lm) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double analytic, double reference) {
  const double denom = std::max({std::fabs(analytic), std::fabs(reference), 1e-10});
  return std::fabs(analytic - reference) / denom;
}

inline double max_rel_err(std::span<const double> analytic,
                          const std::vector<double>& reference) {
  double worst = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (std::fabs(analytic[i] - reference[i]) < 1e-12) continue;
    worst = std::max(worst, rel_err(analytic[i], reference[i]));
  }
  return worst;
}

inline bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i], &b[i], sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace testutil
