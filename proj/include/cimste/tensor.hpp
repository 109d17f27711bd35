// SPDX-License-Identifier: Apache-2.0
//
// Dense tensors with reverse-mode automatic differentiation.
//
// Recording model: every differentiable op output owns a shared Node.  Nodes
// hold shared_ptrs to their parent nodes, so a recorded subgraph stays alive
// exactly as long as some tensor (or downstream node) references it.  Leaf
// tensors (user-created with requires_grad) have a persistent grad buffer
// that backward() accumulates into; intermediate adjoints live on the nodes
// and are released as backward consumes them.
//
// All value and adjoint storage goes through Buffer, which feeds the global
// allocation counters used by the cost profiler.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cimste/errors.hpp"

namespace cimste {

enum class DType { F64, F32 };

// Global high-water accounting for tensor/tape storage.  Peaks are measured
// since the last reset_peaks(); reset sets them to the current level, not 0.
class EngineStats {
 public:
  std::int64_t bytes_live() const { return bytes_.load(); }
  std::int64_t bytes_peak() const { return bytes_peak_.load(); }
  std::int64_t nodes_live() const { return nodes_.load(); }
  std::int64_t nodes_peak() const { return nodes_peak_.load(); }
  std::uint64_t nodes_created() const { return created_.load(); }
  void reset_peaks();

  void add_bytes(std::int64_t delta);
  void node_created();
  void node_destroyed();

 private:
  std::atomic<std::int64_t> bytes_{0};
  std::atomic<std::int64_t> bytes_peak_{0};
  std::atomic<std::int64_t> nodes_{0};
  std::atomic<std::int64_t> nodes_peak_{0};
  std::atomic<std::uint64_t> created_{0};
};

EngineStats& engine_stats();

// Counted storage for tensor values, grads and adjoints.
class Buffer {
 public:
  explicit Buffer(std::size_t n, double fill = 0.0);
  explicit Buffer(std::vector<double> values);
  ~Buffer();
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;

  std::size_t size() const { return v_.size(); }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

 private:
  std::vector<double> v_;
};

using BufferPtr = std::shared_ptr<Buffer>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One recorded operation.  `parents[i]` is set when input i is itself a
// recorded output; `leaf_sinks[i]` is set when input i is a requires-grad
// leaf.  Both null means no gradient flows to that input.
struct Node {
  Node();
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  std::uint64_t id = 0;
  std::size_t out_size = 0;
  std::vector<NodePtr> parents;
  std::vector<BufferPtr> leaf_sinks;
  std::vector<std::size_t> input_sizes;
  BufferPtr adjoint;  // lazily allocated during backward
  std::function<void(Node&)> backward;

  // Returns the accumulation target for input i, or nullptr when no gradient
  // path exists.  Allocates (and zero-fills) a parent adjoint on demand, which
  // is what keeps backward traversal alive through zero-derivative ops.
  double* grad_sink(std::size_t i);
  double* ensure_adjoint();
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         bool requires_grad = false, DType dtype = DType::F64);

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false,
                      DType dtype = DType::F64);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false, DType dtype = DType::F64);
  static Tensor scalar(double value, bool requires_grad = false,
                       DType dtype = DType::F64);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const;
  bool empty() const { return data_ == nullptr; }

  const double* data() const;
  double* mutable_data();
  std::span<const double> values() const;
  std::vector<double> to_vector() const;
  double at(std::size_t flat) const;
  double item() const;  // requires numel() == 1

  bool requires_grad() const { return requires_grad_; }
  DType dtype() const { return dtype_; }

  bool has_grad() const { return grad_ != nullptr; }
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  std::optional<std::uint64_t> node_id() const;
  bool on_tape() const { return node_ != nullptr; }

  // Value-identical tensor with no tape linkage; shares the value buffer.
  Tensor detach() const;

  // Internal plumbing, used by op implementations.
  const BufferPtr& buffer() const { return data_; }
  const BufferPtr& grad_buffer() const { return grad_; }
  const NodePtr& node() const { return node_; }
  void attach_node(NodePtr node);

 private:
  std::vector<std::size_t> shape_;
  BufferPtr data_;
  BufferPtr grad_;  // leaves only
  NodePtr node_;    // recorded op outputs only
  bool requires_grad_ = false;
  DType dtype_ = DType::F64;
};

// --- gradient recording scope -----------------------------------------------

bool grad_recording_enabled();

// RAII scope controlling whether ops record tape nodes.  Nested scopes
// restore the previous setting; the innermost one wins.
class GradScope {
 public:
  explicit GradScope(bool enabled);
  ~GradScope();
  GradScope(const GradScope&) = delete;
  GradScope& operator=(const GradScope&) = delete;

 private:
  bool prev_;
};

template <typename F>
auto grad_scope(bool enabled, F&& body) {
  GradScope scope(enabled);
  return std::forward<F>(body)();
}

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);  // equal shape or scalar operand
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // b must be scalar (numel 1)
Tensor scale(const Tensor& a, double c);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor round_even(const Tensor& a);  // gradient is zero almost everywhere
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor transpose(const Tensor& a);  // rank-2 only
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sum(const Tensor& a);  // [m x n] -> [m]
Tensor max_abs(const Tensor& a);  // scalar; subgradient at the first argmax
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // [m x n] + [n]

// im2col for [N,C,H,W] input, stride 1, no padding: returns
// [N*OH*OW, C*kh*kw] so a convolution becomes a matmul with the
// [outC, C*kh*kw] kernel matrix.
Tensor unfold(const Tensor& input, std::size_t kh, std::size_t kw);

// Populates grads of every requires-grad leaf reachable from `loss`.
// Repeated forward+backward cycles accumulate; callers reset with zero_grad.
void backward(const Tensor& loss);

// Banker's rounding used by every hard quantizer in the project.
double round_half_even(double v);

std::string shape_string(const std::vector<std::size_t>& shape);

namespace detail {

// Extension point for fused ops (cross-entropy, unfold, the STE composition).
// `inputs` fixes the gradient routing order used by Node::grad_sink.
Tensor make_op_output(std::vector<std::size_t> shape, std::vector<double> values,
                      DType dtype, std::initializer_list<const Tensor*> inputs,
                      std::function<void(Node&)> backward_fn);

bool any_requires_grad(std::initializer_list<const Tensor*> inputs);
DType promote(std::initializer_list<const Tensor*> inputs);

}  // namespace detail

}  // namespace cimste
