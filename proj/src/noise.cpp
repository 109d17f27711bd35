// SPDX-License-Identifier: Apache-2.0

#include "cimste/noise.hpp"

#include <cmath>
#include <numbers>

#include "cimste/errors.hpp"

namespace cimste::noise {

namespace stream {

namespace {

// Philox4x32 constants (Salmon et al., SC 2011).
constexpr std::uint32_t kW32A = 0x9E3779B9u;
constexpr std::uint32_t kW32B = 0xBB67AE85u;
constexpr std::uint32_t kM4x32A = 0xD2511F53u;
constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void single_round(std::array<std::uint32_t, 4>& ctr,
                         const std::array<std::uint32_t, 2>& key) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kM4x32A) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kM4x32B) * ctr[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

// Two independent standard normals from two 32-bit words via Box-Muller.
inline void box_muller(std::uint32_t w0, std::uint32_t w1, double& z0, double& z1) {
  constexpr double kScale = 1.0 / 4294967296.0;  // 2^-32
  const double u1 = (static_cast<double>(w0) + 0.5) * kScale;
  const double u2 = (static_cast<double>(w1) + 0.5) * kScale;
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  z0 = radius * std::cos(angle);
  z1 = radius * std::sin(angle);
}

// Four normals per Philox block; index b selects block b/4, lane b%4.
inline std::array<double, 4> normal_quad(std::uint64_t seed, Domain domain,
                                         std::uint64_t a, std::uint64_t block) {
  const auto words = philox_block(seed, domain, a, block);
  std::array<double, 4> z{};
  box_muller(words[0], words[1], z[0], z[1]);
  box_muller(words[2], words[3], z[2], z[3]);
  return z;
}

}  // namespace

std::array<std::uint32_t, 4> philox_block(std::uint64_t seed, Domain domain,
                                          std::uint64_t a, std::uint64_t b) {
  std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(domain),
      static_cast<std::uint32_t>(a),
      static_cast<std::uint32_t>(a >> 32),
      static_cast<std::uint32_t>(b),
  };
  std::array<std::uint32_t, 2> key = {
      static_cast<std::uint32_t>(seed) ^ static_cast<std::uint32_t>(b >> 32),
      static_cast<std::uint32_t>(seed >> 32),
  };
  for (int round = 0; round < 10; ++round) {
    single_round(ctr, key);
    key[0] += kW32A;
    key[1] += kW32B;
  }
  return ctr;
}

double standard_normal(std::uint64_t seed, Domain domain, std::uint64_t a,
                       std::uint64_t b) {
  return normal_quad(seed, domain, a, b / 4)[b % 4];
}

void fill_standard_normals(std::uint64_t seed, Domain domain, std::uint64_t a,
                           std::uint64_t b0, std::span<double> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    const std::uint64_t b = b0 + i;
    const auto quad = normal_quad(seed, domain, a, b / 4);
    std::uint64_t lane = b % 4;
    while (lane < 4 && i < out.size()) {
      out[i++] = quad[lane++];
    }
  }
}

std::uint64_t uniform_u64(std::uint64_t seed, Domain domain, std::uint64_t a,
                          std::uint64_t b) {
  const auto words = philox_block(seed, domain, a, b);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::uint64_t uniform_index(std::uint64_t seed, Domain domain, std::uint64_t a,
                            std::uint64_t b, std::uint64_t n) {
  if (n == 0) throw ContractError("uniform_index requires n > 0");
  // 128-bit multiply-shift keeps the modulo bias below 2^-64.
  const unsigned __int128 prod =
      static_cast<unsigned __int128>(uniform_u64(seed, domain, a, b)) * n;
  return static_cast<std::uint64_t>(prod >> 64);
}

}  // namespace stream

// --- sources -----------------------------------------------------------------

const char* source_name(Source s) {
  switch (s) {
    case kProgramming: return "programming";
    case kRead: return "read";
    case kThermal: return "thermal";
    case kRetention: return "retention";
    case kIrDrop: return "ir_drop";
    case kNonlinearity: return "nonlinearity";
    case kAdc: return "adc";
    case kDac: return "dac";
  }
  return "?";
}

unsigned parse_sources(const std::vector<std::string>& names) {
  unsigned mask = 0;
  for (const std::string& name : names) {
    bool found = false;
    for (Source s : {kProgramming, kRead, kThermal, kRetention, kIrDrop,
                     kNonlinearity, kAdc, kDac}) {
      if (name == source_name(s)) {
        mask |= s;
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown noise source '" + name + "'");
  }
  return mask;
}

std::vector<std::string> source_names(unsigned mask) {
  std::vector<std::string> out;
  for (Source s : {kProgramming, kRead, kThermal, kRetention, kIrDrop,
                   kNonlinearity, kAdc, kDac}) {
    if (mask & s) out.emplace_back(source_name(s));
  }
  return out;
}

void NoiseConfig::validate() const {
  if (level < 0.0) throw ConfigError("noise level must be >= 0");
  if (sigma_prog_base < 0.0 || sigma_read < 0.0 || thermal_kappa < 0.0 ||
      ir_gamma < 0.0 || nonlin_beta < 0.0) {
    throw ConfigError("noise parameters sigma/kappa/gamma/beta must be >= 0");
  }
  if (retention_tau <= 0.0) throw ConfigError("retention_tau must be > 0");
  if (retention_t < 0.0) throw ConfigError("retention_t must be >= 0");
  if (adc_bits < 2 || adc_bits > 16 || dac_bits < 2 || dac_bits > 16) {
    throw ConfigError("adc_bits and dac_bits must lie in [2, 16]");
  }
}

bool NoiseConfig::source_active(Source s) const {
  if (!(enabled_sources & s)) return false;
  switch (s) {
    case kProgramming: return level > 0.0 && sigma_prog_base > 0.0;
    case kRead: return sigma_read > 0.0;
    case kThermal: return thermal_kappa != 0.0 && delta_T != 0.0;
    case kRetention: return retention_t > 0.0;
    case kIrDrop: return ir_gamma > 0.0;
    case kNonlinearity: return nonlin_beta > 0.0;
    case kAdc: return true;
    case kDac: return dac_bits < 8;
  }
  return false;
}

// --- shared maps ---------------------------------------------------------------

std::uint64_t derive_counter(std::uint64_t layer, std::uint64_t pass) {
  return (layer << 40) | (pass & ((std::uint64_t{1} << 40) - 1));
}

namespace {

// Same comparison semantics as the tensor clamp op, so the tape-recorded
// mirror of the pipeline stays bit-identical.
inline double clamp_nonneg(double v) { return v < 0.0 ? 0.0 : v; }

}  // namespace

FactorPair programming_factors(const NoiseConfig& cfg, std::uint64_t program_counter,
                               std::size_t rows, std::size_t cols) {
  const std::size_t n = rows * cols;
  FactorPair f;
  f.plus.resize(n);
  f.minus.resize(n);
  const double sigma = cfg.level * cfg.sigma_prog_base;
  std::vector<double> z(2 * n);
  stream::fill_standard_normals(cfg.seed, stream::Domain::kProgram, program_counter, 0, z);
  for (std::size_t e = 0; e < n; ++e) {
    f.plus[e] = std::exp(sigma * z[2 * e]);
    f.minus[e] = std::exp(sigma * z[2 * e + 1]);
  }
  return f;
}

FactorPair read_factors(const NoiseConfig& cfg, std::uint64_t read_index,
                        std::size_t rows, std::size_t cols) {
  const std::size_t n = rows * cols;
  FactorPair f;
  f.plus.resize(n);
  f.minus.resize(n);
  std::vector<double> z(2 * n);
  stream::fill_standard_normals(cfg.seed, stream::Domain::kRead, read_index, 0, z);
  for (std::size_t e = 0; e < n; ++e) {
    f.plus[e] = 1.0 + cfg.sigma_read * z[2 * e];
    f.minus[e] = 1.0 + cfg.sigma_read * z[2 * e + 1];
  }
  return f;
}

std::vector<double> ir_attenuation_map(const NoiseConfig& cfg, std::size_t rows,
                                       std::size_t cols) {
  std::vector<double> att(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double pos = (static_cast<double>(i) / static_cast<double>(rows) +
                          static_cast<double>(j) / static_cast<double>(cols)) /
                         2.0;
      att[i * cols + j] = std::max(0.0, 1.0 - cfg.ir_gamma * pos);
    }
  }
  return att;
}

double thermal_scale(const NoiseConfig& cfg) { return 1.0 + cfg.thermal_kappa * cfg.delta_T; }

double retention_decay(const NoiseConfig& cfg) {
  return std::exp(-cfg.retention_t / cfg.retention_tau);
}

double dac_map(const NoiseConfig& cfg, double x_uint8) {
  if (!cfg.source_active(kDac)) return x_uint8;
  const double step = static_cast<double>(1 << (8 - cfg.dac_bits));
  double code = round_half_even(x_uint8 / step);
  const double max_code = static_cast<double>((1 << cfg.dac_bits) - 1);
  if (code < 0.0) code = 0.0;
  if (code > max_code) code = max_code;
  return code * step;
}

double adc_map(const NoiseConfig& cfg, double y_gain) {
  if (!cfg.source_active(kAdc)) return y_gain;
  const double fs = static_cast<double>(quant::adc_fullscale(cfg.adc_bits));
  double code = round_half_even(y_gain);
  if (code > fs) code = fs;
  if (code < -fs) code = -fs;
  return code;
}

// --- program / infer ------------------------------------------------------------

CrossbarProgram program(const quant::SplitInput& split,
                        const std::vector<std::int32_t>& bias_q, double gain,
                        const NoiseConfig& cfg, std::uint64_t program_counter) {
  cfg.validate();
  const std::size_t out = split.w_shape[0];
  const std::size_t in = split.w_shape[1];
  if (bias_q.size() != out) {
    throw DimensionError("bias_q length " + std::to_string(bias_q.size()) +
                         " does not match " + std::to_string(out) + " outputs");
  }

  CrossbarProgram prog;
  prog.rows = in;
  prog.cols = out;
  prog.gain = gain;
  prog.program_seed = program_counter;
  prog.g_plus.resize(in * out);
  prog.g_minus.resize(in * out);
  for (std::size_t i = 0; i < in; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      prog.g_plus[i * out + o] = static_cast<double>(split.w_plus[o * in + i]);
      prog.g_minus[i * out + o] = static_cast<double>(split.w_minus[o * in + i]);
    }
  }
  prog.bias_q = bias_q;

  if (cfg.source_active(kProgramming)) {
    const FactorPair f = programming_factors(cfg, program_counter, in, out);
    for (std::size_t e = 0; e < in * out; ++e) {
      prog.g_plus[e] *= f.plus[e];
      prog.g_minus[e] *= f.minus[e];
    }
  }
  if (cfg.source_active(kThermal)) {
    const double ts = thermal_scale(cfg);
    for (std::size_t e = 0; e < in * out; ++e) {
      prog.g_plus[e] = clamp_nonneg(prog.g_plus[e] * ts);
      prog.g_minus[e] = clamp_nonneg(prog.g_minus[e] * ts);
    }
  }
  if (cfg.source_active(kRetention)) {
    const double decay = retention_decay(cfg);
    for (std::size_t e = 0; e < in * out; ++e) {
      prog.g_plus[e] = kMidConductance + (prog.g_plus[e] - kMidConductance) * decay;
      prog.g_minus[e] = kMidConductance + (prog.g_minus[e] - kMidConductance) * decay;
    }
  }
  return prog;
}

std::vector<double> infer(const CrossbarProgram& prog,
                          const std::vector<std::uint8_t>& x_uint8, std::size_t batch,
                          const NoiseConfig& cfg, std::uint64_t read_index) {
  cfg.validate();
  const std::size_t in = prog.rows;
  const std::size_t out = prog.cols;
  if (x_uint8.size() != batch * in) {
    throw DimensionError("infer input of " + std::to_string(x_uint8.size()) +
                         " values does not match batch " + std::to_string(batch) +
                         " x rows " + std::to_string(in));
  }

  std::vector<double> xd(batch * in);
  for (std::size_t i = 0; i < xd.size(); ++i) {
    xd[i] = dac_map(cfg, static_cast<double>(x_uint8[i]));
  }

  const bool read_on = cfg.source_active(kRead);
  const bool ir_on = cfg.source_active(kIrDrop);
  FactorPair rf;
  if (read_on) rf = read_factors(cfg, read_index, in, out);
  std::vector<double> att;
  if (ir_on) att = ir_attenuation_map(cfg, in, out);

  // One fused pass builds the effective differential conductances; the
  // per-element arithmetic order matches the recorded mirror exactly.
  std::vector<double> gd(in * out);
  for (std::size_t e = 0; e < in * out; ++e) {
    double gp = prog.g_plus[e];
    double gm = prog.g_minus[e];
    if (read_on) {
      gp = clamp_nonneg(gp * rf.plus[e]);
      gm = clamp_nonneg(gm * rf.minus[e]);
    }
    if (ir_on) {
      gp *= att[e];
      gm *= att[e];
    }
    gd[e] = gp - gm;
  }

  // Zero-point reference read: the offset-binary correction measured through
  // the same effective conductances, scaled by the 128 input offset.
  std::vector<double> reference(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    for (std::size_t i = 0; i < in; ++i) reference[o] += gd[i * out + o];
    reference[o] = reference[o] * -128.0;
  }

  std::vector<double> y(batch * out, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xrow = xd.data() + b * in;
    double* yrow = y.data() + b * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xrow[i];
      const double* grow = gd.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yrow[o] += xv * grow[o];
    }
    for (std::size_t o = 0; o < out; ++o) {
      yrow[o] = yrow[o] + reference[o];
      yrow[o] = yrow[o] + static_cast<double>(prog.bias_q[o]);
    }
  }

  for (double& v : y) v = v * prog.gain;

  if (cfg.source_active(kNonlinearity)) {
    const double fs = static_cast<double>(quant::adc_fullscale(cfg.adc_bits));
    const double ymax = fs / cfg.nonlin_beta;
    const double inv = 1.0 / ymax;
    for (double& v : y) v = ymax * std::tanh(v * inv);
  }

  if (cfg.source_active(kAdc)) {
    for (double& v : y) v = adc_map(cfg, v);
  }
  return y;
}

}  // namespace cimste::noise
