// SPDX-License-Identifier: Apache-2.0

#include "cimste/layer.hpp"

#include <cmath>
#include <limits>

#include "cimste/errors.hpp"

namespace cimste::layer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_finite(const Tensor& t, const char* what) {
  const double* p = t.data();
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(p[i])) {
      throw DataError(std::string(what) + " contains a non-finite value at index " +
                      std::to_string(i));
    }
  }
}

// Recorded int8 quantization: values match quant::quant_int8 bit for bit.
struct MirrorQuant {
  Tensor q;      // quantized integer values as doubles
  Tensor scale;  // one-element tensor
};

MirrorQuant mirror_quant_int8(const Tensor& x) {
  check_finite(x, "quant_int8 input");
  MirrorQuant m;
  Tensor amax = max_abs(x);
  if (amax.item() == 0.0) {
    m.scale = Tensor::scalar(1.0);
  } else {
    m.scale = div(amax, Tensor::scalar(127.0));
  }
  m.q = clamp(round_even(div(x, m.scale)), -127.0, 127.0);
  return m;
}

// Recorded mirror of the full quantize/split/program/infer/rescale pipeline.
// Every arithmetic step matches the raw simulator exactly, so the forward
// value is bit-identical to noisy_pipeline_values on the same counters.
Tensor mirror_noisy_pipeline(const Tensor& x, const LinearLayer& layer,
                             const Tensor& y_clean, const noise::NoiseConfig& cfg,
                             NoiseCounters counters) {
  using noise::NoiseConfig;
  const std::size_t in = layer.in_features();
  const std::size_t out = layer.out_features();
  const std::size_t batch = x.shape()[0];
  (void)batch;

  MirrorQuant xq = mirror_quant_int8(x);
  MirrorQuant wq = mirror_quant_int8(layer.weight);

  // SplitInput: offset-binary activations and the differential weight pair.
  Tensor x_u8 = add(xq.q, Tensor::scalar(128.0));
  Tensor w_plus = relu(wq.q);
  Tensor w_minus = relu(neg(wq.q));

  Tensor scale_prod = mul(xq.scale, wq.scale);
  Tensor bias_q = layer.bias.empty()
                      ? Tensor::zeros({out})
                      : round_even(div(layer.bias, scale_prod));

  // Gain: fullscale / max(1, max|y_clean| / (scale_x * scale_w)).
  const double fullscale = static_cast<double>(quant::adc_fullscale(cfg.adc_bits));
  Tensor peak = div(max_abs(y_clean), scale_prod);
  Tensor gain = div(Tensor::scalar(fullscale), clamp(peak, 1.0, kInf));

  // Program: transpose into crossbar orientation, then programming noise,
  // thermal drift, retention, in the simulator's order.
  Tensor g_plus = transpose(w_plus);
  Tensor g_minus = transpose(w_minus);
  const std::uint64_t prog_counter = counters.combined();
  if (cfg.source_active(noise::kProgramming)) {
    noise::FactorPair f = noise::programming_factors(cfg, prog_counter, in, out);
    g_plus = mul(g_plus, Tensor({in, out}, std::move(f.plus)));
    g_minus = mul(g_minus, Tensor({in, out}, std::move(f.minus)));
  }
  if (cfg.source_active(noise::kThermal)) {
    const double ts = noise::thermal_scale(cfg);
    g_plus = clamp(scale(g_plus, ts), 0.0, kInf);
    g_minus = clamp(scale(g_minus, ts), 0.0, kInf);
  }
  if (cfg.source_active(noise::kRetention)) {
    const double decay = noise::retention_decay(cfg);
    Tensor mid = Tensor::full({in, out}, noise::kMidConductance);
    g_plus = add(scale(sub(g_plus, mid), decay), mid);
    g_minus = add(scale(sub(g_minus, mid), decay), mid);
  }

  // Infer: DAC, read variance, IR-drop, differential accumulation, gain,
  // non-linearity, ADC.
  Tensor xd = x_u8;
  if (cfg.source_active(noise::kDac)) {
    const double step = static_cast<double>(1 << (8 - cfg.dac_bits));
    const double max_code = static_cast<double>((1 << cfg.dac_bits) - 1);
    xd = scale(clamp(round_even(div(xd, Tensor::scalar(step))), 0.0, max_code), step);
  }
  if (cfg.source_active(noise::kRead)) {
    noise::FactorPair f = noise::read_factors(cfg, counters.combined(), in, out);
    g_plus = clamp(mul(g_plus, Tensor({in, out}, std::move(f.plus))), 0.0, kInf);
    g_minus = clamp(mul(g_minus, Tensor({in, out}, std::move(f.minus))), 0.0, kInf);
  }
  if (cfg.source_active(noise::kIrDrop)) {
    Tensor att({in, out}, noise::ir_attenuation_map(cfg, in, out));
    g_plus = mul(g_plus, att);
    g_minus = mul(g_minus, att);
  }
  Tensor g_diff = sub(g_plus, g_minus);
  // Zero-point reference read through the same effective conductances.
  Tensor reference = scale(row_sum(transpose(g_diff)), -128.0);
  Tensor y = add_rowvec(add_rowvec(matmul(xd, g_diff), reference), bias_q);
  y = mul(y, gain);
  if (cfg.source_active(noise::kNonlinearity)) {
    const double ymax = fullscale / cfg.nonlin_beta;
    const double inv = 1.0 / ymax;
    y = scale(cimste::tanh(scale(y, inv)), ymax);
  }
  if (cfg.source_active(noise::kAdc)) {
    y = clamp(round_even(y), -fullscale, fullscale);
  }

  // Rescale back to the real axis.
  Tensor factor = div(scale_prod, gain);
  return mul(y, factor);
}

}  // namespace

GradMode parse_grad_mode(const std::string& name) {
  if (name == "baseline") return GradMode::Baseline;
  if (name == "full") return GradMode::Full;
  if (name == "isolated") return GradMode::Isolated;
  if (name == "detached") return GradMode::Detached;
  throw ConfigError("unknown grad mode '" + name +
                    "' (expected baseline|full|isolated|detached)");
}

std::string to_string(GradMode mode) {
  switch (mode) {
    case GradMode::Baseline: return "baseline";
    case GradMode::Full: return "full";
    case GradMode::Isolated: return "isolated";
    case GradMode::Detached: return "detached";
  }
  return "?";
}

Tensor clean_linear(const Tensor& x, const LinearLayer& layer) {
  Tensor y = matmul(x, transpose(layer.weight));
  if (!layer.bias.empty()) y = add_rowvec(y, layer.bias);
  return y;
}

std::vector<double> clean_linear_values(std::span<const double> x, std::size_t batch,
                                        std::span<const double> weight,
                                        std::span<const double> bias,
                                        std::size_t out_features, std::size_t in_features) {
  std::vector<double> y(batch * out_features, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xrow = x.data() + b * in_features;
    double* yrow = y.data() + b * out_features;
    // Same accumulation order as matmul(x, transpose(W)).
    for (std::size_t i = 0; i < in_features; ++i) {
      const double xv = xrow[i];
      for (std::size_t o = 0; o < out_features; ++o) {
        yrow[o] += xv * weight[o * in_features + i];
      }
    }
    if (!bias.empty()) {
      for (std::size_t o = 0; o < out_features; ++o) yrow[o] = yrow[o] + bias[o];
    }
  }
  return y;
}

std::vector<double> noisy_pipeline_values(std::span<const double> x, std::size_t batch,
                                          std::span<const double> weight,
                                          std::span<const double> bias,
                                          std::size_t out_features, std::size_t in_features,
                                          const noise::NoiseConfig& cfg,
                                          NoiseCounters counters,
                                          const std::vector<double>& y_clean) {
  Tensor xt({batch, in_features}, std::vector<double>(x.begin(), x.end()));
  Tensor wt({out_features, in_features}, std::vector<double>(weight.begin(), weight.end()));

  quant::QuantizedTensor xq = quant::quant_int8(xt);
  quant::QuantizedTensor wq = quant::quant_int8(wt);
  quant::SplitInput split = quant::split_input(xq, wq);

  std::vector<std::int32_t> bias_q;
  if (bias.empty()) {
    bias_q.assign(out_features, 0);
  } else {
    Tensor bt({out_features}, std::vector<double>(bias.begin(), bias.end()));
    bias_q = quant::quant_bias(&bt, out_features, xq.scale, wq.scale);
  }
  const double gain = quant::compute_gain(xq.scale, wq.scale, y_clean, cfg.adc_bits);

  noise::CrossbarProgram prog =
      noise::program(split, bias_q, gain, cfg, counters.combined());
  std::vector<double> y_noisy =
      noise::infer(prog, split.x_uint8, batch, cfg, counters.combined());
  return quant::rescale(y_noisy, gain, xq.scale, wq.scale);
}

std::vector<double> noisy_linear_values(std::span<const double> x, std::size_t batch,
                                        const LinearLayer& layer,
                                        const noise::NoiseConfig& cfg,
                                        NoiseCounters counters) {
  std::span<const double> w{layer.weight.data(), layer.weight.numel()};
  std::span<const double> b =
      layer.bias.empty() ? std::span<const double>{}
                         : std::span<const double>{layer.bias.data(), layer.bias.numel()};
  std::vector<double> y_clean =
      clean_linear_values(x, batch, w, b, layer.out_features(), layer.in_features());
  return noisy_pipeline_values(x, batch, w, b, layer.out_features(), layer.in_features(),
                               cfg, counters, y_clean);
}

Tensor noisy_linear(const Tensor& x, const LinearLayer& layer,
                    const noise::NoiseConfig& cfg, bool with_noise, GradMode mode,
                    NoiseCounters counters) {
  if (x.rank() != 2 || x.shape()[1] != layer.in_features()) {
    throw DimensionError("noisy_linear input " + shape_string(x.shape()) +
                         " does not match weight " + shape_string(layer.weight.shape()));
  }
  Tensor y_clean = clean_linear(x, layer);
  if (!with_noise || mode == GradMode::Baseline) return y_clean;
  cfg.validate();

  if (mode == GradMode::Isolated) {
    // Noise path entirely off the tape; only the delta addition is recorded.
    std::span<const double> w{layer.weight.data(), layer.weight.numel()};
    std::span<const double> b = layer.bias.empty()
                                    ? std::span<const double>{}
                                    : std::span<const double>{layer.bias.data(),
                                                              layer.bias.numel()};
    std::vector<double> y_scaled =
        noisy_pipeline_values({x.data(), x.numel()}, x.shape()[0], w, b,
                              layer.out_features(), layer.in_features(), cfg, counters,
                              y_clean.to_vector());
    std::vector<double> delta(y_scaled.size());
    const double* yc = y_clean.data();
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = y_scaled[i] - yc[i];
    return add(y_clean, Tensor(y_clean.shape(), std::move(delta)));
  }

  Tensor y_scaled = mirror_noisy_pipeline(x, layer, y_clean, cfg, counters);
  if (mode == GradMode::Full) return y_scaled;

  // Detached: delta = y_scaled - detach(y_clean); return y_clean + detach(delta).
  Tensor delta = sub(y_scaled, y_clean.detach());
  return add(y_clean, delta.detach());
}

// --- model ---------------------------------------------------------------------

Model::Model(std::vector<std::size_t> layer_sizes, GradMode mode, noise::NoiseConfig cfg,
             std::uint64_t init_seed)
    : sizes_(std::move(layer_sizes)), mode_(mode), cfg_(std::move(cfg)) {
  if (sizes_.size() < 2) {
    throw ConfigError("model needs at least one layer (two extents), got " +
                      std::to_string(sizes_.size()));
  }
  for (std::size_t e : sizes_) {
    if (e == 0) throw ConfigError("model layer sizes must be positive");
  }
  cfg_.validate();
  layers_.reserve(sizes_.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    std::vector<double> w(out * in);
    noise::stream::fill_standard_normals(init_seed, noise::stream::Domain::kInit, l, 0, w);
    // He-scaled hidden layers; the output layer starts near zero so training
    // begins from the uniform-prediction loss.
    const bool is_output = l + 2 == sizes_.size();
    const double scale = std::sqrt(2.0 / static_cast<double>(in)) * (is_output ? 0.05 : 1.0);
    for (double& v : w) v *= scale;
    LinearLayer layer;
    layer.weight = Tensor({out, in}, std::move(w), true);
    layer.bias = Tensor::zeros({out}, true);
    layers_.push_back(std::move(layer));
  }
}

Tensor Model::forward(const Tensor& x, bool with_noise, std::uint64_t pass) {
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = noisy_linear(h, layers_[l], cfg_, with_noise, mode_, NoiseCounters{l, pass});
    if (l + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

std::vector<double> Model::forward_values(std::span<const double> x, std::size_t batch,
                                          bool with_noise, const noise::NoiseConfig& cfg,
                                          std::uint64_t pass) const {
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LinearLayer& layer = layers_[l];
    std::span<const double> w{layer.weight.data(), layer.weight.numel()};
    std::span<const double> b = layer.bias.empty()
                                    ? std::span<const double>{}
                                    : std::span<const double>{layer.bias.data(),
                                                              layer.bias.numel()};
    std::vector<double> y_clean =
        clean_linear_values(h, batch, w, b, layer.out_features(), layer.in_features());
    if (with_noise) {
      std::vector<double> y_scaled = noisy_pipeline_values(
          h, batch, w, b, layer.out_features(), layer.in_features(), cfg,
          NoiseCounters{l, pass}, y_clean);
      // Same composition as the tape path: y_clean + (y_scaled - y_clean).
      for (std::size_t i = 0; i < y_clean.size(); ++i) {
        y_clean[i] = y_clean[i] + (y_scaled[i] - y_clean[i]);
      }
    }
    if (l + 1 < layers_.size()) {
      for (double& v : y_clean) v = v > 0.0 ? v : 0.0;
    }
    h = std::move(y_clean);
  }
  return h;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (LinearLayer& l : layers_) {
    out.push_back(&l.weight);
    if (!l.bias.empty()) out.push_back(&l.bias);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const LinearLayer& l : layers_) {
    n += l.weight.numel();
    if (!l.bias.empty()) n += l.bias.numel();
  }
  return n;
}

std::string Model::parameter_name(std::size_t index) const {
  const std::size_t layer = index / 2;
  return "layer" + std::to_string(layer) + (index % 2 == 0 ? ".weight" : ".bias");
}

Model build_model(const std::vector<std::size_t>& layer_sizes, GradMode mode,
                  const noise::NoiseConfig& cfg, std::uint64_t init_seed) {
  return Model(layer_sizes, mode, cfg, init_seed);
}

}  // namespace cimste::layer
