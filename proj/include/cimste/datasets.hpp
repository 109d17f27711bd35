// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale datasets: a two-class spiral classifier task and next-character
// prediction over a bundled text corpus.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cimste/tensor.hpp"

namespace cimste::data {

struct Batch {
  Tensor inputs;  // [n x input_dim]
  std::vector<int> labels;
};

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual const char* kind() const = 0;
  virtual std::size_t train_size() const = 0;
  virtual std::size_t test_size() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual Batch train_batch(std::span<const std::size_t> indices) const = 0;
  virtual Batch test_batch(std::size_t begin, std::size_t count) const = 0;
  virtual std::vector<int> train_labels() const = 0;
};

// Two interleaved spirals, 1024 train / 256 test points, balanced classes,
// fully determined by the seed.
std::unique_ptr<Dataset> make_spirals(std::uint64_t seed);

// Next-character prediction with a fixed context window; inputs are
// concatenated one-hot bytes.  The vocabulary is built from the file.
std::unique_ptr<Dataset> make_chars(const std::string& corpus_path, std::uint64_t seed,
                                    std::size_t context = 16);

std::unique_ptr<Dataset> make_dataset(const std::string& kind, std::uint64_t seed,
                                      const std::string& corpus_path);

}  // namespace cimste::data
