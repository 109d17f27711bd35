// SPDX-License-Identifier: Apache-2.0
//
// Noisy linear layer: clean computation on the tape, int8 crossbar noise
// pipeline in the forward value, with selectable gradient management.
//
//   baseline  - noise skipped entirely
//   full      - noise pipeline recorded and differentiated; hard quantizers
//               contribute their true (zero) derivative
//   isolated  - noise pipeline computed off-tape by the raw simulator
//   detached  - noise pipeline recorded, then severed with detach
//
// isolated and detached produce identical forward values and identical
// gradients; they differ only in tape footprint.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cimste/noise.hpp"
#include "cimste/tensor.hpp"

namespace cimste::layer {

enum class GradMode { Baseline, Full, Isolated, Detached };

GradMode parse_grad_mode(const std::string& name);
std::string to_string(GradMode mode);

struct LinearLayer {
  Tensor weight;  // [out x in], requires_grad
  Tensor bias;    // [out], may be empty for a no-bias layer

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }
};

// Noise draws are keyed by (layer, pass) so every layer and step sees fresh
// draws while staying fully reproducible.
struct NoiseCounters {
  std::uint64_t layer = 0;
  std::uint64_t pass = 0;
  std::uint64_t combined() const { return noise::derive_counter(layer, pass); }
};

Tensor clean_linear(const Tensor& x, const LinearLayer& layer);

Tensor noisy_linear(const Tensor& x, const LinearLayer& layer,
                    const noise::NoiseConfig& cfg, bool with_noise, GradMode mode,
                    NoiseCounters counters);

// Raw (tensor-free) value paths.  The quantized pipeline is bit-identical to
// the recorded mirror used by the full/detached modes.
std::vector<double> clean_linear_values(std::span<const double> x, std::size_t batch,
                                        std::span<const double> weight,
                                        std::span<const double> bias,  // may be empty
                                        std::size_t out_features, std::size_t in_features);

std::vector<double> noisy_pipeline_values(std::span<const double> x, std::size_t batch,
                                          std::span<const double> weight,
                                          std::span<const double> bias,
                                          std::size_t out_features, std::size_t in_features,
                                          const noise::NoiseConfig& cfg,
                                          NoiseCounters counters,
                                          const std::vector<double>& y_clean);

std::vector<double> noisy_linear_values(std::span<const double> x, std::size_t batch,
                                        const LinearLayer& layer,
                                        const noise::NoiseConfig& cfg,
                                        NoiseCounters counters);

// MLP of noisy linear layers with relu between, final layer linear.
class Model {
 public:
  Model(std::vector<std::size_t> layer_sizes, GradMode mode, noise::NoiseConfig cfg,
        std::uint64_t init_seed);

  Tensor forward(const Tensor& x, bool with_noise, std::uint64_t pass);

  // Value-only forward used for evaluation; mode-independent.
  std::vector<double> forward_values(std::span<const double> x, std::size_t batch,
                                     bool with_noise, const noise::NoiseConfig& cfg,
                                     std::uint64_t pass) const;

  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;
  std::string parameter_name(std::size_t index) const;

  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  GradMode mode() const { return mode_; }
  void set_mode(GradMode mode) { mode_ = mode; }
  const noise::NoiseConfig& config() const { return cfg_; }
  noise::NoiseConfig& config() { return cfg_; }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

 private:
  std::vector<std::size_t> sizes_;
  std::vector<LinearLayer> layers_;
  GradMode mode_;
  noise::NoiseConfig cfg_;
};

Model build_model(const std::vector<std::size_t>& layer_sizes, GradMode mode,
                  const noise::NoiseConfig& cfg, std::uint64_t init_seed);

}  // namespace cimste::layer
