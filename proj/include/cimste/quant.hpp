// SPDX-License-Identifier: Apache-2.0
//
// Symmetric int8 quantization, offset-binary input splitting, bias
// quantization, gain computation and output rescaling for the noisy
// linear pipeline.

#pragma once

#include <cstdint>
#include <vector>

#include "cimste/tensor.hpp"

namespace cimste::quant {

// Symmetric per-tensor quantization: real = scale * value, values in
// [-127, 127] so the differential weight split stays exact.
struct QuantizedTensor {
  std::vector<std::int8_t> values;
  double scale = 1.0;
  std::vector<std::size_t> shape;
};

// Offset-binary activations plus differential weight pair.
// Reconstruction identity: (x_uint8 - 128) * (w_plus - w_minus) == x_q * w_q.
struct SplitInput {
  std::vector<std::uint8_t> x_uint8;  // x_q + 128, shape of x
  std::vector<std::size_t> x_shape;
  std::vector<std::uint8_t> w_plus;   // max(w_q, 0), shape of w
  std::vector<std::uint8_t> w_minus;  // max(-w_q, 0)
  std::vector<std::size_t> w_shape;   // [out x in]
  std::vector<std::int32_t> offset_correction;  // 128 * sum_i w_q[o,i], per output
};

// scale = max|x| / 127 (1.0 when x is all zero); values round half to even.
QuantizedTensor quant_int8(const Tensor& x);

std::vector<double> dequant(const QuantizedTensor& q);

// x_q shape [batch x in] (or [in]), w_q shape [out x in].
SplitInput split_input(const QuantizedTensor& x_q, const QuantizedTensor& w_q);

// bias_q = round(bias / (scale_x * scale_w)) on the integer accumulator axis.
// A null bias yields zeros.
std::vector<std::int32_t> quant_bias(const Tensor* bias, std::size_t out_features,
                                     double scale_x, double scale_w);

// Maps the largest expected integer accumulation onto the ADC full scale:
// g = fullscale / max(1, max|y_clean| / (scale_x * scale_w)).
double compute_gain(double scale_x, double scale_w, const Tensor& y_clean, int adc_bits);
double compute_gain(double scale_x, double scale_w, const std::vector<double>& y_clean,
                    int adc_bits);

inline int adc_fullscale(int adc_bits) { return (1 << (adc_bits - 1)) - 1; }

// Exact inverse of the gain/scale chain: y * scale_x * scale_w / g.
Tensor rescale(const Tensor& y_noisy, double g, double scale_x, double scale_w);
std::vector<double> rescale(const std::vector<double>& y_noisy, double g, double scale_x,
                            double scale_w);

}  // namespace cimste::quant
