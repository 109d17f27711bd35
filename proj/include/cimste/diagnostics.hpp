// SPDX-License-Identifier: Apache-2.0
//
// Gradient diagnostics: a frozen-noise finite-difference oracle for the true
// noisy gradient, directional/variance/magnitude statistics comparing it with
// the STE gradient, and the per-mode training cost profiler.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cimste/layer.hpp"
#include "cimste/noise.hpp"
#include "cimste/tensor.hpp"

namespace cimste::diag {

// Fixed linear functional L(y) = <coeffs, y>.  Its adjoint dL/dy does not
// depend on where it is evaluated, so the STE gradient of this loss is
// deterministic across noise redraws and the oracle comparisons are exact.
struct LinearLoss {
  Tensor coeffs;  // [batch x out]

  Tensor apply(const Tensor& y) const;
  double value(std::span<const double> y) const;
};

LinearLoss make_linear_loss(std::size_t batch, std::size_t out, std::uint64_t seed);

struct GradReport {
  std::vector<double> g_tilde;
  std::vector<std::vector<double>> g_star_samples;
  std::vector<std::vector<double>> delta_samples;
  double cos_mean = 0.0;
  double cos_std = 0.0;
  double cos_predicted = 0.0;   // |g~| / sqrt(|g~|^2 + mean |delta|^2)
  double var_gstar = 0.0;       // E|delta|^2 - |E delta|^2
  double mag_ratio = 0.0;       // mean (|g*|^2 - |g~|^2) / |g~|^2
  double delta_mean_norm = 0.0;
  double gdelta_corr = 0.0;     // mean <g~, delta> / (|g~| |delta|); reported only
  std::vector<bool> discontinuity_flags;  // per coordinate, from the h/2 rerun
};

struct OracleOptions {
  double h = 1e-4;
  std::size_t n_samples = 32;
  std::size_t max_weights = 64;
  // false: noise applied in weight space (the continuous crossbar of the
  // gradient theory); true: the full int8 quantized pipeline.
  bool pipeline = false;
  std::vector<std::size_t> coords;  // optional coordinate subset
};

// Clean-path gradient of the loss w.r.t. the layer weight, flattened.
std::vector<double> ste_gradient(const layer::LinearLayer& layer, const Tensor& x,
                                 const LinearLoss& loss);

struct OracleResult {
  std::vector<std::vector<double>> samples;  // one flat gradient per noise draw
  std::vector<bool> discontinuity_flags;     // > 10% disagreement between h and h/2
};

// Central finite differences of the end-to-end noisy loss with frozen draws:
// identical noise on both sides of each difference, so the result reflects
// the noise function's weight sensitivity rather than resampling.
OracleResult oracle_true_gradient(const layer::LinearLayer& layer, const Tensor& x,
                                  const LinearLoss& loss, const noise::NoiseConfig& cfg,
                                  OracleOptions opts);

GradReport analyze(const std::vector<double>& g_tilde,
                   const std::vector<std::vector<double>>& g_star_samples);

std::string report_samples_csv(const GradReport& report);

// --- cost profiler -------------------------------------------------------------

struct CostReport {
  layer::GradMode mode;
  double wall_ms_per_step = 0.0;   // median over measured steps
  std::int64_t peak_bytes = 0;     // high-water tensor+tape bytes during a step
  std::uint64_t tape_nodes = 0;    // high-water live tape nodes during a step
};

struct ProfileWorkload {
  std::vector<std::size_t> layer_sizes = {128, 128, 128, 64};
  std::size_t batch = 64;
  std::size_t steps = 25;   // measured steps
  std::size_t warmup = 5;
  double level = 1.0;
  std::uint64_t seed = 7;
};

CostReport profile(layer::GradMode mode, const ProfileWorkload& workload);
std::vector<CostReport> profile_all_modes(const ProfileWorkload& workload);

// CSV rows: mode,wall_ms,peak_bytes,tape_nodes
std::string cost_csv(const std::vector<CostReport>& reports);

}  // namespace cimste::diag
