// SPDX-License-Identifier: Apache-2.0

#include "cimste/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "cimste/errors.hpp"
#include "cimste/train.hpp"

namespace cimste::diag {

namespace {

using noise::stream::Domain;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Cosine in extended precision: for near-parallel vectors the true value is
// within ~1e-25 of 1, and plain double evaluation of dot/(|a||b|) lands a few
// ulps on either side of 1.0.  80-bit intermediates round back to the correct
// double.
double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double num = 0.0L, da = 0.0L, db = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += static_cast<long double>(a[i]) * b[i];
    da += static_cast<long double>(a[i]) * a[i];
    db += static_cast<long double>(b[i]) * b[i];
  }
  if (db == 0.0L) return 0.0;
  const long double c = num / std::sqrt(da * db);
  return static_cast<double>(std::min(1.0L, std::max(-1.0L, c)));
}

// Weight-space noise model of the continuous crossbar: multiplicative
// programming/read factors, thermal scaling and IR attenuation applied to
// the signed weights.  Quantization, retention and non-linearity belong to
// the int8 pipeline and do not act here.
std::vector<double> continuous_noisy_weights(std::span<const double> weight,
                                             std::size_t out, std::size_t in,
                                             const noise::NoiseConfig& cfg,
                                             std::uint64_t sample) {
  std::vector<double> w(weight.begin(), weight.end());
  const std::size_t n = w.size();
  if (cfg.source_active(noise::kProgramming)) {
    std::vector<double> z(n);
    noise::stream::fill_standard_normals(cfg.seed, Domain::kDiag, sample * 4, 0, z);
    const double sigma = cfg.level * cfg.sigma_prog_base;
    for (std::size_t e = 0; e < n; ++e) w[e] *= std::exp(sigma * z[e]);
  }
  if (cfg.source_active(noise::kThermal)) {
    const double ts = noise::thermal_scale(cfg);
    for (double& v : w) v *= ts;
  }
  if (cfg.source_active(noise::kRead)) {
    std::vector<double> z(n);
    noise::stream::fill_standard_normals(cfg.seed, Domain::kDiag, sample * 4 + 1, 0, z);
    for (std::size_t e = 0; e < n; ++e) w[e] *= 1.0 + cfg.sigma_read * z[e];
  }
  if (cfg.source_active(noise::kIrDrop)) {
    const std::vector<double> att = noise::ir_attenuation_map(cfg, in, out);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) w[o * in + i] *= att[i * out + o];
    }
  }
  return w;
}

double noisy_loss_value(std::span<const double> x, std::size_t batch,
                        const std::vector<double>& weight, std::span<const double> bias,
                        std::size_t out, std::size_t in, const noise::NoiseConfig& cfg,
                        std::uint64_t sample, bool pipeline, const LinearLoss& loss) {
  if (pipeline) {
    std::vector<double> y_clean =
        layer::clean_linear_values(x, batch, weight, bias, out, in);
    std::vector<double> y = layer::noisy_pipeline_values(
        x, batch, weight, bias, out, in, cfg, layer::NoiseCounters{0, sample}, y_clean);
    return loss.value(y);
  }
  std::vector<double> w_noisy = continuous_noisy_weights(weight, out, in, cfg, sample);
  std::vector<double> y = layer::clean_linear_values(x, batch, w_noisy, bias, out, in);
  return loss.value(y);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Tensor LinearLoss::apply(const Tensor& y) const { return sum(mul(y, coeffs)); }

double LinearLoss::value(std::span<const double> y) const {
  const double* c = coeffs.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * c[i];
  return acc;
}

LinearLoss make_linear_loss(std::size_t batch, std::size_t out, std::uint64_t seed) {
  std::vector<double> c(batch * out);
  noise::stream::fill_standard_normals(seed, Domain::kDiag, 0xC0FFEE, 0, c);
  return LinearLoss{Tensor({batch, out}, std::move(c))};
}

std::vector<double> ste_gradient(const layer::LinearLayer& layer, const Tensor& x,
                                 const LinearLoss& loss) {
  layer::LinearLayer probe;
  probe.weight = Tensor(layer.weight.shape(), layer.weight.to_vector(), true);
  if (!layer.bias.empty()) {
    probe.bias = Tensor(layer.bias.shape(), layer.bias.to_vector(), true);
  }
  Tensor y = layer::clean_linear(x, probe);
  backward(loss.apply(y));
  std::span<const double> g = probe.weight.grad();
  return std::vector<double>(g.begin(), g.end());
}

OracleResult oracle_true_gradient(const layer::LinearLayer& layer, const Tensor& x,
                                  const LinearLoss& loss, const noise::NoiseConfig& cfg,
                                  OracleOptions opts) {
  if (opts.h <= 0.0) throw ContractError("oracle requires h > 0");
  if (opts.n_samples == 0) throw ContractError("oracle requires n_samples >= 1");
  const std::size_t n_weights = layer.weight.numel();
  std::vector<std::size_t> coords = opts.coords;
  if (coords.empty()) {
    if (n_weights > opts.max_weights) {
      throw ResourceError(
          "layer has " + std::to_string(n_weights) + " weights, above the oracle cap of " +
          std::to_string(opts.max_weights) +
          "; use subsampled-coordinate mode (OracleOptions::coords)");
    }
    coords.resize(n_weights);
    for (std::size_t k = 0; k < n_weights; ++k) coords[k] = k;
  }

  const std::size_t out = layer.out_features();
  const std::size_t in = layer.in_features();
  const std::size_t batch = x.shape()[0];
  std::span<const double> xs{x.data(), x.numel()};
  std::span<const double> bias =
      layer.bias.empty() ? std::span<const double>{}
                         : std::span<const double>{layer.bias.data(), layer.bias.numel()};
  const std::vector<double> w0 = layer.weight.to_vector();

  OracleResult result;
  result.samples.resize(opts.n_samples);
  std::vector<std::vector<double>> samples_h2(opts.n_samples);

  std::vector<double> w = w0;
  for (std::size_t s = 0; s < opts.n_samples; ++s) {
    result.samples[s].resize(coords.size());
    samples_h2[s].resize(coords.size());
    for (std::size_t ci = 0; ci < coords.size(); ++ci) {
      const std::size_t k = coords[ci];
      for (int half : {0, 1}) {
        const double h = half == 0 ? opts.h : opts.h / 2.0;
        w[k] = w0[k] + h;
        const double lp = noisy_loss_value(xs, batch, w, bias, out, in, cfg, s,
                                           opts.pipeline, loss);
        w[k] = w0[k] - h;
        const double lm = noisy_loss_value(xs, batch, w, bias, out, in, cfg, s,
                                           opts.pipeline, loss);
        w[k] = w0[k];
        const double g = (lp - lm) / (2.0 * h);
        if (half == 0) {
          result.samples[s][ci] = g;
        } else {
          samples_h2[s][ci] = g;
        }
      }
    }
  }

  // Flag coordinates whose sample-mean estimate moves by more than 10%
  // between h and h/2; those differences are dominated by step boundaries
  // of the hard quantizers rather than by a local slope.
  result.discontinuity_flags.assign(coords.size(), false);
  for (std::size_t ci = 0; ci < coords.size(); ++ci) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t s = 0; s < opts.n_samples; ++s) {
      m1 += result.samples[s][ci];
      m2 += samples_h2[s][ci];
    }
    m1 /= static_cast<double>(opts.n_samples);
    m2 /= static_cast<double>(opts.n_samples);
    const double denom = std::max({std::fabs(m1), std::fabs(m2), 1e-12});
    result.discontinuity_flags[ci] = std::fabs(m1 - m2) / denom > 0.10;
  }
  return result;
}

GradReport analyze(const std::vector<double>& g_tilde,
                   const std::vector<std::vector<double>>& g_star_samples) {
  if (g_star_samples.size() < 2) {
    throw ContractError("analyze requires at least two oracle samples");
  }
  const double g_norm = norm(g_tilde);
  if (g_norm == 0.0) throw DegenerateInputError("analyze requires a nonzero STE gradient");
  const std::size_t dim = g_tilde.size();
  const std::size_t n = g_star_samples.size();

  GradReport r;
  r.g_tilde = g_tilde;
  r.g_star_samples = g_star_samples;
  r.delta_samples.resize(n);

  std::vector<double> cos(n);
  std::vector<double> delta_mean(dim, 0.0);
  double mean_delta_sq = 0.0;
  double mag_ratio_sum = 0.0;
  double corr_sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const std::vector<double>& gs = g_star_samples[s];
    if (gs.size() != dim) {
      throw DimensionError("oracle sample " + std::to_string(s) +
                           " length does not match the STE gradient");
    }
    std::vector<double> delta(dim);
    for (std::size_t k = 0; k < dim; ++k) delta[k] = gs[k] - g_tilde[k];
    const double gs_norm = norm(gs);
    const double d_norm = norm(delta);
    cos[s] = cosine(g_tilde, gs);
    mean_delta_sq += d_norm * d_norm;
    mag_ratio_sum += (gs_norm * gs_norm - g_norm * g_norm) / (g_norm * g_norm);
    corr_sum += d_norm == 0.0 ? 0.0 : dot(g_tilde, delta) / (g_norm * d_norm);
    for (std::size_t k = 0; k < dim; ++k) delta_mean[k] += delta[k];
    r.delta_samples[s] = std::move(delta);
  }
  mean_delta_sq /= static_cast<double>(n);
  for (double& v : delta_mean) v /= static_cast<double>(n);

  double cm = 0.0;
  for (double c : cos) cm += c;
  cm /= static_cast<double>(n);
  double cv = 0.0;
  for (double c : cos) cv += (c - cm) * (c - cm);
  r.cos_mean = cm;
  r.cos_std = std::sqrt(cv / static_cast<double>(n));
  const long double gn = g_norm;
  r.cos_predicted = static_cast<double>(
      gn / std::sqrt(gn * gn + static_cast<long double>(mean_delta_sq)));
  r.delta_mean_norm = norm(delta_mean);
  r.var_gstar = mean_delta_sq - r.delta_mean_norm * r.delta_mean_norm;
  r.mag_ratio = mag_ratio_sum / static_cast<double>(n);
  r.gdelta_corr = corr_sum / static_cast<double>(n);
  return r;
}

std::string report_samples_csv(const GradReport& report) {
  std::string out = "sample,cos,delta_norm,gstar_norm\n";
  char buf[160];
  for (std::size_t s = 0; s < report.g_star_samples.size(); ++s) {
    const std::vector<double>& gs = report.g_star_samples[s];
    const std::vector<double>& d = report.delta_samples[s];
    std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12g,%.12g\n", s,
                  cosine(report.g_tilde, gs), norm(d), norm(gs));
    out += buf;
  }
  return out;
}

// --- profiler --------------------------------------------------------------------

CostReport profile(layer::GradMode mode, const ProfileWorkload& workload) {
  noise::NoiseConfig cfg;
  cfg.level = workload.level;
  cfg.seed = workload.seed;

  layer::Model model = layer::build_model(workload.layer_sizes, mode, cfg, workload.seed);
  const std::size_t in = workload.layer_sizes.front();
  const std::size_t classes = workload.layer_sizes.back();

  std::vector<double> xv(workload.batch * in);
  noise::stream::fill_standard_normals(workload.seed, Domain::kDiag, 0xDA7A, 0, xv);
  Tensor x({workload.batch, in}, std::move(xv));
  std::vector<int> labels(workload.batch);
  for (std::size_t i = 0; i < workload.batch; ++i) {
    labels[i] = static_cast<int>(i % classes);
  }

  train::Adam adam(model.parameters(), train::AdamConfig{});
  const bool with_noise = mode != layer::GradMode::Baseline;

  std::vector<double> wall;
  std::int64_t peak_bytes = 0;
  std::uint64_t peak_nodes = 0;
  for (std::size_t step = 0; step < workload.warmup + workload.steps; ++step) {
    engine_stats().reset_peaks();
    const auto t0 = std::chrono::steady_clock::now();
    Tensor logits = model.forward(x, with_noise, step);
    Tensor loss = train::cross_entropy(logits, labels);
    for (Tensor* p : model.parameters()) p->zero_grad();
    backward(loss);
    adam.step();
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    if (step >= workload.warmup) {
      wall.push_back(ms);
      peak_bytes = std::max(peak_bytes, engine_stats().bytes_peak());
      peak_nodes = std::max(peak_nodes,
                            static_cast<std::uint64_t>(engine_stats().nodes_peak()));
    }
  }
  return {mode, median(std::move(wall)), peak_bytes, peak_nodes};
}

std::vector<CostReport> profile_all_modes(const ProfileWorkload& workload) {
  std::vector<CostReport> out;
  for (layer::GradMode mode : {layer::GradMode::Baseline, layer::GradMode::Full,
                               layer::GradMode::Isolated, layer::GradMode::Detached}) {
    out.push_back(profile(mode, workload));
  }
  return out;
}

std::string cost_csv(const std::vector<CostReport>& reports) {
  std::string out = "mode,wall_ms,peak_bytes,tape_nodes\n";
  char buf[128];
  for (const CostReport& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%lld,%llu\n",
                  layer::to_string(r.mode).c_str(), r.wall_ms_per_step,
                  static_cast<long long>(r.peak_bytes),
                  static_cast<unsigned long long>(r.tape_nodes));
    out += buf;
  }
  return out;
}

}  // namespace cimste::diag
