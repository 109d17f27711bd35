// SPDX-License-Identifier: Apache-2.0

#include "cimste/quant.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "cimste/errors.hpp"

namespace cimste::quant {

QuantizedTensor quant_int8(const Tensor& x) {
  const std::size_t n = x.numel();
  const double* p = x.data();
  double maxabs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw DataError("quant_int8 input contains a non-finite value at index " +
                      std::to_string(i));
    }
    maxabs = std::max(maxabs, std::fabs(p[i]));
  }
  QuantizedTensor q;
  q.shape = x.shape();
  q.scale = maxabs == 0.0 ? 1.0 : maxabs / 127.0;
  q.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r = round_half_even(p[i] / q.scale);
    if (r > 127.0) r = 127.0;
    if (r < -127.0) r = -127.0;
    q.values[i] = static_cast<std::int8_t>(r);
  }
  return q;
}

std::vector<double> dequant(const QuantizedTensor& q) {
  std::vector<double> out(q.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = q.scale * static_cast<double>(q.values[i]);
  }
  return out;
}

SplitInput split_input(const QuantizedTensor& x_q, const QuantizedTensor& w_q) {
  if (w_q.shape.size() != 2) {
    throw DimensionError("split_input weights must be rank 2, got " +
                         shape_string(w_q.shape));
  }
  const std::size_t out = w_q.shape[0];
  const std::size_t in = w_q.shape[1];
  const std::size_t x_cols = x_q.shape.empty() ? 0 : x_q.shape.back();
  if (x_cols != in) {
    throw DimensionError("split_input activation columns " + shape_string(x_q.shape) +
                         " do not match weight shape " + shape_string(w_q.shape));
  }

  SplitInput s;
  s.x_shape = x_q.shape;
  s.w_shape = w_q.shape;
  s.x_uint8.resize(x_q.values.size());
  for (std::size_t i = 0; i < x_q.values.size(); ++i) {
    s.x_uint8[i] = static_cast<std::uint8_t>(static_cast<int>(x_q.values[i]) + 128);
  }
  s.w_plus.resize(w_q.values.size());
  s.w_minus.resize(w_q.values.size());
  s.offset_correction.assign(out, 0);
  for (std::size_t o = 0; o < out; ++o) {
    std::int32_t colsum = 0;
    for (std::size_t i = 0; i < in; ++i) {
      const int w = w_q.values[o * in + i];
      s.w_plus[o * in + i] = static_cast<std::uint8_t>(w > 0 ? w : 0);
      s.w_minus[o * in + i] = static_cast<std::uint8_t>(w < 0 ? -w : 0);
      colsum += w;
    }
    s.offset_correction[o] = 128 * colsum;
  }
  return s;
}

std::vector<std::int32_t> quant_bias(const Tensor* bias, std::size_t out_features,
                                     double scale_x, double scale_w) {
  if (scale_x <= 0.0 || scale_w <= 0.0) {
    throw ContractError("quant_bias requires positive scales");
  }
  std::vector<std::int32_t> out(out_features, 0);
  if (!bias || bias->empty()) return out;
  if (bias->numel() != out_features) {
    throw DimensionError("bias shape " + shape_string(bias->shape()) +
                         " does not match " + std::to_string(out_features) + " outputs");
  }
  const double* p = bias->data();
  for (std::size_t i = 0; i < out_features; ++i) {
    const double r = round_half_even(p[i] / (scale_x * scale_w));
    if (r > static_cast<double>(std::numeric_limits<std::int32_t>::max()) ||
        r < static_cast<double>(std::numeric_limits<std::int32_t>::min())) {
      throw RangeError("quantized bias " + std::to_string(r) +
                       " overflows the 32-bit accumulator");
    }
    out[i] = static_cast<std::int32_t>(r);
  }
  return out;
}

namespace {

double gain_from_max(double scale_x, double scale_w, double maxabs, int adc_bits) {
  if (scale_x <= 0.0 || scale_w <= 0.0) {
    throw ContractError("compute_gain requires positive scales");
  }
  const double fullscale = static_cast<double>(adc_fullscale(adc_bits));
  const double peak = maxabs / (scale_x * scale_w);
  return fullscale / std::max(1.0, peak);
}

}  // namespace

double compute_gain(double scale_x, double scale_w, const Tensor& y_clean, int adc_bits) {
  double maxabs = 0.0;
  const double* p = y_clean.data();
  for (std::size_t i = 0; i < y_clean.numel(); ++i) maxabs = std::max(maxabs, std::fabs(p[i]));
  return gain_from_max(scale_x, scale_w, maxabs, adc_bits);
}

double compute_gain(double scale_x, double scale_w, const std::vector<double>& y_clean,
                    int adc_bits) {
  double maxabs = 0.0;
  for (double v : y_clean) maxabs = std::max(maxabs, std::fabs(v));
  return gain_from_max(scale_x, scale_w, maxabs, adc_bits);
}

Tensor rescale(const Tensor& y_noisy, double g, double scale_x, double scale_w) {
  if (g <= 0.0) throw ContractError("rescale requires a positive gain");
  return scale(y_noisy, scale_x * scale_w / g);
}

std::vector<double> rescale(const std::vector<double>& y_noisy, double g, double scale_x,
                            double scale_w) {
  if (g <= 0.0) throw ContractError("rescale requires a positive gain");
  const double f = scale_x * scale_w / g;
  std::vector<double> out(y_noisy.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y_noisy[i] * f;
  return out;
}

}  // namespace cimste::quant
