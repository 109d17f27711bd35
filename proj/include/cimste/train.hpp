// SPDX-License-Identifier: Apache-2.0
//
// Adam optimizer with bias correction and the cross-entropy loss op.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cimste/tensor.hpp"

namespace cimste::train {

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Per-parameter first/second moment state.  step() consumes the parameters'
// accumulated grads and updates values in place:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   W <- W - alpha * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamConfig cfg,
       std::vector<std::string> param_names = {});

  void step();
  std::uint64_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

// Mean negative log-softmax of the true class, stabilized by max-subtraction.
// Gradient is (softmax - onehot) / batch.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Value-domain version used by evaluation paths.
double cross_entropy_values(std::span<const double> logits, std::size_t batch,
                            std::size_t classes, const std::vector<int>& labels);

}  // namespace cimste::train
