// SPDX-License-Identifier: Apache-2.0
//
// Named-tensor checkpoint container.  Layout, all little-endian:
//   magic "CIMSTE1\0" | u32 tensor count | per tensor:
//   u32 name length | name bytes | u32 rank | u64 extents... | f64 data
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cimste/layer.hpp"
#include "cimste/tensor.hpp"

namespace cimste::ckpt {

inline constexpr char kMagic[8] = {'C', 'I', 'M', 'S', 'T', 'E', '1', '\0'};

void save(const std::string& path,
          const std::vector<std::pair<std::string, const Tensor*>>& tensors);

std::vector<std::pair<std::string, Tensor>> load(const std::string& path);

void save_model(const std::string& path, const layer::Model& model);
void load_model(const std::string& path, layer::Model& model);

}  // namespace cimste::ckpt
