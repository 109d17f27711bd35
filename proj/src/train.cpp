// SPDX-License-Identifier: Apache-2.0

#include "cimste/train.hpp"

#include <cmath>

#include "cimste/errors.hpp"

namespace cimste::train {

Adam::Adam(std::vector<Tensor*> params, AdamConfig cfg, std::vector<std::string> names)
    : params_(std::move(params)), names_(std::move(names)), cfg_(cfg) {
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0 && cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor* p : params_) {
    if (!p->has_grad()) throw ContractError("adam parameter has no grad buffer");
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor* p = params_[pi];
    const std::size_t n = p->numel();
    std::span<const double> g = p->grad();
    double* w = p->mutable_data();
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isnan(g[i])) {
        const std::string name = pi < names_.size() ? names_[pi]
                                                    : "parameter " + std::to_string(pi);
        throw TrainingError("NaN gradient in " + name + " at element " +
                            std::to_string(i));
      }
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] = w[i] - cfg_.alpha * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw DimensionError("cross_entropy expects [batch x classes] logits, got " +
                         shape_string(logits.shape()));
  }
  const std::size_t batch = logits.shape()[0];
  const std::size_t classes = logits.shape()[1];
  if (labels.size() != batch) {
    throw DimensionError("label count " + std::to_string(labels.size()) +
                         " does not match batch " + std::to_string(batch));
  }
  for (std::size_t r = 0; r < batch; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw DataError("label " + std::to_string(labels[r]) + " out of range [0, " +
                      std::to_string(classes) + ") at row " + std::to_string(r));
    }
  }

  const double* z = logits.data();
  std::vector<double> softmax(batch * classes);
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* row = z + r * classes;
    double m = row[0];
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      softmax[r * classes + c] = std::exp(row[c] - m);
      denom += softmax[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) softmax[r * classes + c] /= denom;
    loss += m + std::log(denom) - row[labels[r]];
  }
  loss /= static_cast<double>(batch);

  auto probs = std::make_shared<std::vector<double>>(std::move(softmax));
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  return detail::make_op_output(
      {1}, {loss}, logits.dtype(), {&logits},
      [batch, classes, probs, labels_copy](Node& node) {
        const double adj = node.adjoint->data()[0];
        if (double* gz = node.grad_sink(0)) {
          const double inv_b = 1.0 / static_cast<double>(batch);
          for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t c = 0; c < classes; ++c) {
              double g = (*probs)[r * classes + c];
              if (static_cast<std::size_t>((*labels_copy)[r]) == c) g -= 1.0;
              gz[r * classes + c] += adj * g * inv_b;
            }
          }
        }
      });
}

double cross_entropy_values(std::span<const double> logits, std::size_t batch,
                            std::size_t classes, const std::vector<int>& labels) {
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* row = logits.data() + r * classes;
    double m = row[0];
    for (std::size_t c = 1; c < classes; ++c) m = std::max(m, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - m);
    loss += m + std::log(denom) - row[labels[r]];
  }
  return loss / static_cast<double>(batch);
}

}  // namespace cimste::train
