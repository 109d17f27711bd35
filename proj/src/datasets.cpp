// SPDX-License-Identifier: Apache-2.0

#include "cimste/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "cimste/errors.hpp"
#include "cimste/noise.hpp"

namespace cimste::data {

namespace {

using noise::stream::Domain;

class SpiralsDataset final : public Dataset {
 public:
  explicit SpiralsDataset(std::uint64_t seed) {
    generate(seed, /*split=*/0, kTrainPerClass, train_points_, train_labels_);
    generate(seed, /*split=*/1, kTestPerClass, test_points_, test_labels_);
  }

  const char* kind() const override { return "spirals"; }
  std::size_t train_size() const override { return train_labels_.size(); }
  std::size_t test_size() const override { return test_labels_.size(); }
  std::size_t input_dim() const override { return 2; }
  std::size_t num_classes() const override { return 2; }

  Batch train_batch(std::span<const std::size_t> indices) const override {
    return gather(train_points_, train_labels_, indices);
  }

  Batch test_batch(std::size_t begin, std::size_t count) const override {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
    return gather(test_points_, test_labels_, idx);
  }

  std::vector<int> train_labels() const override { return train_labels_; }

 private:
  static constexpr std::size_t kTrainPerClass = 512;
  static constexpr std::size_t kTestPerClass = 128;

  // Two interleaved arms plus a thin band of reduced-margin points: every
  // eighth point sits close to the class boundary, which is what noise flips
  // first.  The base arms stay wide enough that training under heavy weight
  // noise still converges.
  static void generate(std::uint64_t seed, int split, std::size_t per_class,
                       std::vector<double>& points, std::vector<int>& labels) {
    for (int c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < per_class; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(per_class);
        const std::uint64_t a = static_cast<std::uint64_t>(split) * 2 + c;
        double jitter_angle =
            0.06 * noise::stream::standard_normal(seed, Domain::kData, a, 2 * k);
        const double jitter_radius =
            0.04 * noise::stream::standard_normal(seed, Domain::kData, a, 2 * k + 1);
        double band = 0.0;
        if (k % 5 == 0) {
          // Reduced-margin point: pushed most of the way to the boundary,
          // alternating sides; still correctly labeled.  Jitter shrinks with
          // the margin so the label stays consistent.
          const double margin_scale = k % 10 == 0 ? 0.05 : 0.12;
          band = (k % 20 < 10 ? 1.0 : -1.0) * (1.0 - margin_scale) *
                 std::numbers::pi / 2.0;
          jitter_angle *= 0.2;
        }
        const double angle =
            c * std::numbers::pi + t * 2.0 * std::numbers::pi + jitter_angle + band;
        const double radius = 0.5 + 2.0 * t + jitter_radius;
        points.push_back(radius * std::cos(angle));
        points.push_back(radius * std::sin(angle));
        labels.push_back(c);
      }
    }
  }

  static Batch gather(const std::vector<double>& points, const std::vector<int>& labels,
                      std::span<const std::size_t> indices) {
    Batch b;
    std::vector<double> values;
    values.reserve(indices.size() * 2);
    b.labels.reserve(indices.size());
    for (std::size_t i : indices) {
      values.push_back(points[2 * i]);
      values.push_back(points[2 * i + 1]);
      b.labels.push_back(labels[i]);
    }
    b.inputs = Tensor({indices.size(), 2}, std::move(values));
    return b;
  }

  std::vector<double> train_points_;
  std::vector<int> train_labels_;
  std::vector<double> test_points_;
  std::vector<int> test_labels_;
};

class CharsDataset final : public Dataset {
 public:
  CharsDataset(const std::string& path, std::size_t context) : context_(context) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file '" + path + "'");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    if (raw.size() <= context_) {
      throw DataError("corpus '" + path + "' is shorter than the context window");
    }

    std::array<int, 256> id_of;
    id_of.fill(-1);
    for (char ch : raw) id_of[static_cast<unsigned char>(ch)] = 0;
    int next = 0;
    for (int b = 0; b < 256; ++b) {
      if (id_of[b] == 0) id_of[b] = next++;
    }
    vocab_ = static_cast<std::size_t>(next);

    ids_.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      ids_[i] = id_of[static_cast<unsigned char>(raw[i])];
    }

    const std::size_t n_samples = ids_.size() - context_;
    const std::size_t n_test = std::max<std::size_t>(1, n_samples / 10);
    n_train_ = n_samples - n_test;
  }

  const char* kind() const override { return "chars"; }
  std::size_t train_size() const override { return n_train_; }
  std::size_t test_size() const override { return ids_.size() - context_ - n_train_; }
  std::size_t input_dim() const override { return context_ * vocab_; }
  std::size_t num_classes() const override { return vocab_; }

  Batch train_batch(std::span<const std::size_t> indices) const override {
    return encode(indices, 0);
  }

  Batch test_batch(std::size_t begin, std::size_t count) const override {
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
    return encode(idx, n_train_);
  }

  std::vector<int> train_labels() const override {
    std::vector<int> out(n_train_);
    for (std::size_t i = 0; i < n_train_; ++i) out[i] = ids_[i + context_];
    return out;
  }

 private:
  Batch encode(std::span<const std::size_t> indices, std::size_t offset) const {
    Batch b;
    std::vector<double> values(indices.size() * context_ * vocab_, 0.0);
    b.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const std::size_t pos = indices[r] + offset;
      for (std::size_t c = 0; c < context_; ++c) {
        values[(r * context_ + c) * vocab_ + ids_[pos + c]] = 1.0;
      }
      b.labels.push_back(ids_[pos + context_]);
    }
    b.inputs = Tensor({indices.size(), context_ * vocab_}, std::move(values));
    return b;
  }

  std::size_t context_;
  std::size_t vocab_ = 0;
  std::size_t n_train_ = 0;
  std::vector<int> ids_;
};

}  // namespace

std::unique_ptr<Dataset> make_spirals(std::uint64_t seed) {
  return std::make_unique<SpiralsDataset>(seed);
}

std::unique_ptr<Dataset> make_chars(const std::string& corpus_path, std::uint64_t seed,
                                    std::size_t context) {
  (void)seed;  // the corpus and split are fixed; batching uses the run seed
  return std::make_unique<CharsDataset>(corpus_path, context);
}

std::unique_ptr<Dataset> make_dataset(const std::string& kind, std::uint64_t seed,
                                      const std::string& corpus_path) {
  if (kind == "spirals") return make_spirals(seed);
  if (kind == "chars") return make_chars(corpus_path, seed);
  throw ConfigError("unknown dataset '" + kind + "' (expected spirals|chars)");
}

}  // namespace cimste::data
