// SPDX-License-Identifier: Apache-2.0
//
// Non-differentiable crossbar noise simulator: programming noise, read
// variance, thermal drift, retention, IR-drop, device non-linearity and
// ADC/DAC quantization, all driven by counter-based random streams so a
// (seed, layer, read) triple fully determines every draw.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cimste/quant.hpp"

namespace cimste::noise {

// --- deterministic streams ---------------------------------------------------

namespace stream {

enum class Domain : std::uint32_t {
  kProgram = 1,
  kRead = 2,
  kInit = 3,
  kBatch = 4,
  kData = 5,
  kDiag = 6,
};

// Philox4x32-10 block for counter (domain, a, b).
std::array<std::uint32_t, 4> philox_block(std::uint64_t seed, Domain domain,
                                          std::uint64_t a, std::uint64_t b);

// Standard normal fully determined by (seed, domain, a, b); consecutive b
// values share Philox blocks in groups of four.
double standard_normal(std::uint64_t seed, Domain domain, std::uint64_t a,
                       std::uint64_t b);

// out[i] == standard_normal(seed, domain, a, b0 + i).
void fill_standard_normals(std::uint64_t seed, Domain domain, std::uint64_t a,
                           std::uint64_t b0, std::span<double> out);

std::uint64_t uniform_u64(std::uint64_t seed, Domain domain, std::uint64_t a,
                          std::uint64_t b);

// Uniform index in [0, n).
std::uint64_t uniform_index(std::uint64_t seed, Domain domain, std::uint64_t a,
                            std::uint64_t b, std::uint64_t n);

}  // namespace stream

// --- configuration -----------------------------------------------------------

enum Source : unsigned {
  kProgramming = 1u << 0,
  kRead = 1u << 1,
  kThermal = 1u << 2,
  kRetention = 1u << 3,
  kIrDrop = 1u << 4,
  kNonlinearity = 1u << 5,
  kAdc = 1u << 6,
  kDac = 1u << 7,
};

constexpr unsigned kAllSources = 0xFFu;
constexpr unsigned kNoSources = 0u;

const char* source_name(Source s);
unsigned parse_sources(const std::vector<std::string>& names);
std::vector<std::string> source_names(unsigned mask);

struct NoiseConfig {
  double level = 1.0;             // scales the lognormal programming sigma
  double sigma_prog_base = 0.05;  // log-sigma per unit level
  double sigma_read = 0.02;       // per-read multiplicative gaussian sigma
  double thermal_kappa = 0.002;   // per kelvin
  double delta_T = 0.0;           // kelvin
  double retention_tau = 1.0e6;   // seconds
  double retention_t = 0.0;       // seconds
  double ir_gamma = 0.15;         // positional attenuation coefficient
  double nonlin_beta = 0.0;       // tanh saturation strength, 0 disables
  int adc_bits = 8;
  int dac_bits = 8;
  std::uint64_t seed = 0;
  unsigned enabled_sources = kAllSources;

  void validate() const;  // throws ConfigError
  bool source_active(Source s) const;
};

// --- programmed crossbar -----------------------------------------------------

// Conductances in crossbar orientation: rows = input lines, cols = output
// lines, so g[i * cols + o] pairs with weight w[o, i].
struct CrossbarProgram {
  std::vector<double> g_plus;
  std::vector<double> g_minus;
  std::vector<std::int32_t> bias_q;
  double gain = 1.0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t program_seed = 0;
};

// Combined per-layer/per-step counter used to key noise draws.
std::uint64_t derive_counter(std::uint64_t layer, std::uint64_t pass);

// Program-time pipeline per conductance: programming noise, thermal drift,
// retention relaxation toward mid-conductance (64), in that order.
CrossbarProgram program(const quant::SplitInput& split,
                        const std::vector<std::int32_t>& bias_q, double gain,
                        const NoiseConfig& cfg, std::uint64_t program_counter);

// Read-time pipeline: DAC requantization, cycle-to-cycle read variance,
// IR-drop attenuation, differential accumulation with the programmed bias,
// gain, device non-linearity, ADC quantization.  Output stays in the gain
// domain; quant::rescale inverts it.
//
// The offset-binary correction is realized as a zero-point reference read:
// 128 times the column sums of the same effective conductances used for the
// accumulation, so the offset channel's noise is common-mode and cancels.
// In the noise-free limit this equals the digital SplitInput correction.
std::vector<double> infer(const CrossbarProgram& prog,
                          const std::vector<std::uint8_t>& x_uint8, std::size_t batch,
                          const NoiseConfig& cfg, std::uint64_t read_index);

// --- shared per-source maps --------------------------------------------------
//
// The tape-recorded mirror of the pipeline uses these same helpers, which is
// what keeps its outputs bit-identical to the raw simulator.

struct FactorPair {
  std::vector<double> plus;
  std::vector<double> minus;
};

FactorPair programming_factors(const NoiseConfig& cfg, std::uint64_t program_counter,
                               std::size_t rows, std::size_t cols);
FactorPair read_factors(const NoiseConfig& cfg, std::uint64_t read_index,
                        std::size_t rows, std::size_t cols);
std::vector<double> ir_attenuation_map(const NoiseConfig& cfg, std::size_t rows,
                                       std::size_t cols);

double thermal_scale(const NoiseConfig& cfg);    // 1 + kappa * delta_T
double retention_decay(const NoiseConfig& cfg);  // exp(-t / tau)
constexpr double kMidConductance = 64.0;

double dac_map(const NoiseConfig& cfg, double x_uint8);  // identity at 8 bits
double adc_map(const NoiseConfig& cfg, double y_gain);   // round + clamp

}  // namespace cimste::noise
