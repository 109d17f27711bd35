// SPDX-License-Identifier: Apache-2.0

#include "cimste/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cimste/errors.hpp"

namespace cimste::ckpt {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

void put_f64(std::ofstream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("truncated checkpoint file '" + path + "'");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("truncated checkpoint file '" + path + "'");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save(const std::string& path,
          const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint file '" + path + "'");
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t e : t->shape()) put_u64(out, e);
    const double* p = t->data();
    for (std::size_t i = 0; i < t->numel(); ++i) put_f64(out, p[i]);
  }
  if (!out) throw IoError("error while writing checkpoint file '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint file '" + path + "'");
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("'" + path + "' is not a CIMSTE1 checkpoint");
  }
  const std::uint32_t count = get_u32(in, path);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw IoError("truncated checkpoint file '" + path + "'");
    }
    const std::uint32_t rank = get_u32(in, path);
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape[r] = static_cast<std::size_t>(get_u64(in, path));
      numel *= shape[r];
    }
    std::vector<double> values(numel);
    for (std::size_t i = 0; i < numel; ++i) {
      values[i] = std::bit_cast<double>(get_u64(in, path));
    }
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_model(const std::string& path, const layer::Model& model) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const layer::LinearLayer& layer = model.layers()[l];
    tensors.emplace_back("layer" + std::to_string(l) + ".weight", &layer.weight);
    if (!layer.bias.empty()) {
      tensors.emplace_back("layer" + std::to_string(l) + ".bias", &layer.bias);
    }
  }
  save(path, tensors);
}

void load_model(const std::string& path, layer::Model& model) {
  const auto tensors = load(path);
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    layer::LinearLayer& layer = model.layers()[l];
    for (const auto& [name, t] : tensors) {
      Tensor* dst = nullptr;
      if (name == "layer" + std::to_string(l) + ".weight") dst = &layer.weight;
      if (name == "layer" + std::to_string(l) + ".bias") dst = &layer.bias;
      if (!dst) continue;
      if (t.shape() != dst->shape()) {
        throw DimensionError("checkpoint tensor '" + name + "' has shape " +
                             shape_string(t.shape()) + ", model expects " +
                             shape_string(dst->shape()));
      }
      std::copy(t.data(), t.data() + t.numel(), dst->mutable_data());
    }
  }
}

}  // namespace cimste::ckpt
