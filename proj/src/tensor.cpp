// SPDX-License-Identifier: Apache-2.0

#include "cimste/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>
#include <utility>

namespace cimste {

namespace {

thread_local bool g_grad_enabled = true;

std::atomic<std::uint64_t> g_next_node_id{1};

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

void check_positive_extents(const std::vector<std::size_t>& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
}

// F32 tensors store values rounded through float; arithmetic stays in double.
void apply_dtype(std::vector<double>& values, DType dtype) {
  if (dtype == DType::F32) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace

// --- stats -------------------------------------------------------------------

EngineStats& engine_stats() {
  static EngineStats stats;
  return stats;
}

void EngineStats::reset_peaks() {
  bytes_peak_.store(bytes_.load());
  nodes_peak_.store(nodes_.load());
}

void EngineStats::add_bytes(std::int64_t delta) {
  std::int64_t now = bytes_.fetch_add(delta) + delta;
  std::int64_t peak = bytes_peak_.load();
  while (now > peak && !bytes_peak_.compare_exchange_weak(peak, now)) {
  }
}

void EngineStats::node_created() {
  created_.fetch_add(1);
  std::int64_t now = nodes_.fetch_add(1) + 1;
  std::int64_t peak = nodes_peak_.load();
  while (now > peak && !nodes_peak_.compare_exchange_weak(peak, now)) {
  }
}

void EngineStats::node_destroyed() { nodes_.fetch_sub(1); }

// --- buffer ------------------------------------------------------------------

Buffer::Buffer(std::size_t n, double fill) : v_(n, fill) {
  engine_stats().add_bytes(static_cast<std::int64_t>(n * sizeof(double)));
}

Buffer::Buffer(std::vector<double> values) : v_(std::move(values)) {
  engine_stats().add_bytes(static_cast<std::int64_t>(v_.size() * sizeof(double)));
}

Buffer::~Buffer() {
  engine_stats().add_bytes(-static_cast<std::int64_t>(v_.size() * sizeof(double)));
}

// --- node --------------------------------------------------------------------

Node::Node() : id(g_next_node_id.fetch_add(1)) { engine_stats().node_created(); }

Node::~Node() { engine_stats().node_destroyed(); }

double* Node::ensure_adjoint() {
  if (!adjoint) adjoint = std::make_shared<Buffer>(out_size);
  return adjoint->data();
}

double* Node::grad_sink(std::size_t i) {
  if (parents[i]) return parents[i]->ensure_adjoint();
  if (leaf_sinks[i]) return leaf_sinks[i]->data();
  return nullptr;
}

// --- tensor ------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values,
               bool requires_grad, DType dtype)
    : shape_(std::move(shape)), requires_grad_(requires_grad), dtype_(dtype) {
  check_positive_extents(shape_);
  if (shape_numel(shape_) != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(shape_));
  }
  apply_dtype(values, dtype_);
  data_ = std::make_shared<Buffer>(std::move(values));
  if (requires_grad_) grad_ = std::make_shared<Buffer>(data_->size());
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad, DType dtype) {
  std::vector<double> v(shape_numel(shape), 0.0);
  return Tensor(std::move(shape), std::move(v), requires_grad, dtype);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad,
                    DType dtype) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(v), requires_grad, dtype);
}

Tensor Tensor::scalar(double value, bool requires_grad, DType dtype) {
  return Tensor({1}, {value}, requires_grad, dtype);
}

std::size_t Tensor::numel() const { return data_ ? data_->size() : 0; }

const double* Tensor::data() const {
  if (!data_) throw ContractError("access to empty tensor");
  return data_->data();
}

double* Tensor::mutable_data() {
  if (!data_) throw ContractError("access to empty tensor");
  return data_->data();
}

std::span<const double> Tensor::values() const { return {data(), numel()}; }

std::vector<double> Tensor::to_vector() const {
  return std::vector<double>(data(), data() + numel());
}

double Tensor::at(std::size_t flat) const {
  if (flat >= numel()) throw ContractError("flat index out of range");
  return data()[flat];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() requires a one-element tensor, shape is " +
                                        shape_string(shape_));
  return data()[0];
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw ContractError("tensor has no grad buffer");
  return {grad_->data(), grad_->size()};
}

std::span<double> Tensor::mutable_grad() {
  if (!grad_) throw ContractError("tensor has no grad buffer");
  return {grad_->data(), grad_->size()};
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->data(), grad_->data() + grad_->size(), 0.0);
}

std::optional<std::uint64_t> Tensor::node_id() const {
  if (node_) return node_->id;
  return std::nullopt;
}

Tensor Tensor::detach() const {
  Tensor out;
  out.shape_ = shape_;
  out.data_ = data_;
  out.dtype_ = dtype_;
  out.requires_grad_ = false;
  return out;
}

void Tensor::attach_node(NodePtr node) {
  node_ = std::move(node);
  requires_grad_ = true;
}

// --- scope -------------------------------------------------------------------

bool grad_recording_enabled() { return g_grad_enabled; }

GradScope::GradScope(bool enabled) : prev_(g_grad_enabled) { g_grad_enabled = enabled; }

GradScope::~GradScope() { g_grad_enabled = prev_; }

// --- helpers -----------------------------------------------------------------

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

double round_half_even(double v) { return std::nearbyint(v); }

namespace detail {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

DType promote(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->dtype() == DType::F64) return DType::F64;
  }
  return DType::F32;
}

Tensor make_op_output(std::vector<std::size_t> shape, std::vector<double> values,
                      DType dtype, std::initializer_list<const Tensor*> inputs,
                      std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(values), false, dtype);
  if (!g_grad_enabled || !any_requires_grad(inputs)) return out;

  auto node = std::make_shared<Node>();
  node->out_size = out.numel();
  node->parents.reserve(inputs.size());
  node->leaf_sinks.reserve(inputs.size());
  node->input_sizes.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t->node()) {
      node->parents.push_back(t->node());
      node->leaf_sinks.push_back(nullptr);
    } else if (t->requires_grad() && t->grad_buffer()) {
      node->parents.push_back(nullptr);
      node->leaf_sinks.push_back(t->grad_buffer());
    } else {
      node->parents.push_back(nullptr);
      node->leaf_sinks.push_back(nullptr);
    }
    node->input_sizes.push_back(t->numel());
  }
  node->backward = std::move(backward_fn);
  out.attach_node(std::move(node));
  return out;
}

}  // namespace detail

// --- backward ----------------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, shape is " +
                        shape_string(loss.shape()));
  }
  if (!loss.node()) {
    throw ContractError("backward requires a loss recorded on the tape");
  }

  // Collect the reachable subgraph.  Creation ids give a topological order,
  // so descending id order guarantees every consumer runs before its inputs.
  std::vector<Node*> order;
  std::unordered_set<std::uint64_t> seen;
  std::vector<Node*> stack{loss.node().get()};
  seen.insert(loss.node()->id);
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const NodePtr& p : n->parents) {
      if (p && seen.insert(p->id).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  loss.node()->ensure_adjoint()[0] += 1.0;
  for (Node* n : order) {
    if (!n->adjoint) continue;
    n->backward(*n);
    n->adjoint.reset();  // adjoint consumed; release like frameworks do
  }
}

// --- op implementations -------------------------------------------------------

namespace {

using detail::make_op_output;
using detail::promote;

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " requires a rank-2 tensor, got " +
                         shape_string(t.shape()));
  }
}

// y[m x n] = a[m x k] * b[k x n], accumulation over k in ascending order for
// every output element; single-threaded for bit determinism.
void matmul_kernel(const double* a, const double* b, double* y, std::size_t m,
                   std::size_t k, std::size_t n) {
  std::fill(y, y + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* yrow = y + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
}

enum class EwKind { Add, Sub, Mul };

double ew_apply(EwKind kind, double x, double y) {
  switch (kind) {
    case EwKind::Add: return x + y;
    case EwKind::Sub: return x - y;
    case EwKind::Mul: return x * y;
  }
  return 0.0;
}

Tensor elementwise_binary(EwKind kind, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!(a.shape() == b.shape() || a_scalar || b_scalar)) {
    throw DimensionError("incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) +
                         " (only equal-shape and scalar broadcasting supported)");
  }
  const Tensor& big = b_scalar ? a : b;
  const std::size_t n = big.numel();
  std::vector<double> out(n);
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = ew_apply(kind, pa[a_scalar ? 0 : i], pb[b_scalar ? 0 : i]);
  }

  BufferPtr abuf = a.buffer();
  BufferPtr bbuf = b.buffer();
  return make_op_output(
      big.shape(), std::move(out), promote({&a, &b}), {&a, &b},
      [kind, a_scalar, b_scalar, n, abuf, bbuf](Node& node) {
        const double* adj = node.adjoint->data();
        if (double* ga = node.grad_sink(0)) {
          for (std::size_t i = 0; i < n; ++i) {
            double g = adj[i];
            if (kind == EwKind::Mul) g *= bbuf->data()[b_scalar ? 0 : i];
            ga[a_scalar ? 0 : i] += g;
          }
        }
        if (double* gb = node.grad_sink(1)) {
          for (std::size_t i = 0; i < n; ++i) {
            double g = adj[i];
            if (kind == EwKind::Sub) g = -g;
            if (kind == EwKind::Mul) g = adj[i] * abuf->data()[a_scalar ? 0 : i];
            gb[b_scalar ? 0 : i] += g;
          }
        }
      });
}

Tensor unary_map(const Tensor& a, const std::function<double(double)>& fn,
                 std::function<void(Node&, const BufferPtr&, const BufferPtr&)> bw) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fn(pa[i]);
  BufferPtr abuf = a.buffer();
  Tensor result = make_op_output(a.shape(), std::move(out), promote({&a}), {&a},
                                 nullptr);
  if (result.node()) {
    BufferPtr obuf = result.buffer();
    result.node()->backward = [bw, abuf, obuf](Node& node) { bw(node, abuf, obuf); };
  }
  return result;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  matmul_kernel(a.data(), b.data(), out.data(), m, k, n);

  BufferPtr abuf = a.buffer();
  BufferPtr bbuf = b.buffer();
  return detail::make_op_output(
      {m, n}, std::move(out), promote({&a, &b}), {&a, &b},
      [m, k, n, abuf, bbuf](Node& node) {
        const double* adj = node.adjoint->data();
        if (double* ga = node.grad_sink(0)) {
          // dL/da = adj * b^T
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              const double* adjrow = adj + i * n;
              const double* brow = bbuf->data() + p * n;
              for (std::size_t j = 0; j < n; ++j) acc += adjrow[j] * brow[j];
              ga[i * k + p] += acc;
            }
          }
        }
        if (double* gb = node.grad_sink(1)) {
          // dL/db = a^T * adj
          for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t i = 0; i < m; ++i) {
              const double av = abuf->data()[i * k + p];
              const double* adjrow = adj + i * n;
              double* gbrow = gb + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * adjrow[j];
            }
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(EwKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(EwKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(EwKind::Mul, a, b); }

Tensor div(const Tensor& a, const Tensor& b) {
  if (b.numel() != 1) {
    throw DimensionError("div requires a scalar divisor, got " + shape_string(b.shape()));
  }
  const std::size_t n = a.numel();
  const double s = b.data()[0];
  std::vector<double> out(n);
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] / s;
  BufferPtr abuf = a.buffer();
  BufferPtr bbuf = b.buffer();
  return detail::make_op_output(
      a.shape(), std::move(out), promote({&a, &b}), {&a, &b},
      [n, abuf, bbuf](Node& node) {
        const double* adj = node.adjoint->data();
        const double s = bbuf->data()[0];
        if (double* ga = node.grad_sink(0)) {
          for (std::size_t i = 0; i < n; ++i) ga[i] += adj[i] / s;
        }
        if (double* gb = node.grad_sink(1)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += -adj[i] * abuf->data()[i] / (s * s);
          gb[0] += acc;
        }
      });
}

Tensor scale(const Tensor& a, double c) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] * c;
  return detail::make_op_output(a.shape(), std::move(out), promote({&a}), {&a},
                                [n, c](Node& node) {
                                  const double* adj = node.adjoint->data();
                                  if (double* ga = node.grad_sink(0)) {
                                    for (std::size_t i = 0; i < n; ++i) ga[i] += c * adj[i];
                                  }
                                });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_map(
      a, [](double v) { return v > 0.0 ? v : 0.0; },
      [](Node& node, const BufferPtr& in, const BufferPtr&) {
        const double* adj = node.adjoint->data();
        if (double* ga = node.grad_sink(0)) {
          // ties at exactly 0 propagate zero
          for (std::size_t i = 0; i < node.out_size; ++i) {
            if (in->data()[i] > 0.0) ga[i] += adj[i];
          }
        }
      });
}

Tensor tanh(const Tensor& a) {
  return unary_map(
      a, [](double v) { return std::tanh(v); },
      [](Node& node, const BufferPtr&, const BufferPtr& out) {
        const double* adj = node.adjoint->data();
        if (double* ga = node.grad_sink(0)) {
          for (std::size_t i = 0; i < node.out_size; ++i) {
            const double t = out->data()[i];
            ga[i] += adj[i] * (1.0 - t * t);
          }
        }
      });
}

Tensor round_even(const Tensor& a) {
  return unary_map(
      a, [](double v) { return round_half_even(v); },
      [](Node& node, const BufferPtr&, const BufferPtr&) {
        // A step function: derivative zero almost everywhere.  The sink is
        // still materialized so zero adjoints keep flowing upstream, matching
        // what a framework pays for backward through a hard quantizer.
        node.grad_sink(0);
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp bounds out of order");
  return unary_map(
      a,
      [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](Node& node, const BufferPtr& in, const BufferPtr&) {
        const double* adj = node.adjoint->data();
        if (double* ga = node.grad_sink(0)) {
          for (std::size_t i = 0; i < node.out_size; ++i) {
            const double v = in->data()[i];
            if (v > lo && v < hi) ga[i] += adj[i];
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const double* pa = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = pa[i * n + j];
  }
  return detail::make_op_output({n, m}, std::move(out), promote({&a}), {&a},
                                [m, n](Node& node) {
                                  const double* adj = node.adjoint->data();
                                  if (double* ga = node.grad_sink(0)) {
                                    for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t j = 0; j < n; ++j) {
                                        ga[i * n + j] += adj[j * m + i];
                                      }
                                    }
                                  }
                                });
}

Tensor sum(const Tensor& a) {
  const std::size_t n = a.numel();
  double acc = 0.0;
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i) acc += pa[i];
  return detail::make_op_output({1}, {acc}, promote({&a}), {&a}, [n](Node& node) {
    const double adj = node.adjoint->data()[0];
    if (double* ga = node.grad_sink(0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += adj;
    }
  });
}

Tensor mean(const Tensor& a) {
  const std::size_t n = a.numel();
  double acc = 0.0;
  const double* pa = a.data();
  for (std::size_t i = 0; i < n; ++i) acc += pa[i];
  acc /= static_cast<double>(n);
  return detail::make_op_output({1}, {acc}, promote({&a}), {&a}, [n](Node& node) {
    const double adj = node.adjoint->data()[0] / static_cast<double>(n);
    if (double* ga = node.grad_sink(0)) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += adj;
    }
  });
}

Tensor row_sum(const Tensor& a) {
  require_rank2(a, "row_sum");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m, 0.0);
  const double* pa = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += pa[i * n + j];
  }
  return detail::make_op_output({m}, std::move(out), promote({&a}), {&a},
                                [m, n](Node& node) {
                                  const double* adj = node.adjoint->data();
                                  if (double* ga = node.grad_sink(0)) {
                                    for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t j = 0; j < n; ++j) {
                                        ga[i * n + j] += adj[i];
                                      }
                                    }
                                  }
                                });
}

Tensor max_abs(const Tensor& a) {
  const std::size_t n = a.numel();
  const double* pa = a.data();
  std::size_t arg = 0;
  double best = std::fabs(pa[0]);
  for (std::size_t i = 1; i < n; ++i) {
    const double v = std::fabs(pa[i]);
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  BufferPtr abuf = a.buffer();
  return detail::make_op_output({1}, {best}, promote({&a}), {&a},
                                [arg, abuf](Node& node) {
                                  const double adj = node.adjoint->data()[0];
                                  if (double* ga = node.grad_sink(0)) {
                                    const double v = abuf->data()[arg];
                                    ga[arg] += adj * (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
                                  }
                                });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_rank2(a, "add_rowvec");
  if (v.rank() != 1 || v.shape()[0] != a.shape()[1]) {
    throw DimensionError("add_rowvec shapes incompatible: " + shape_string(a.shape()) +
                         " + " + shape_string(v.shape()));
  }
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const double* pa = a.data();
  const double* pv = v.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = pa[i * n + j] + pv[j];
  }
  return detail::make_op_output(
      a.shape(), std::move(out), promote({&a, &v}), {&a, &v}, [m, n](Node& node) {
        const double* adj = node.adjoint->data();
        if (double* ga = node.grad_sink(0)) {
          for (std::size_t i = 0; i < m * n; ++i) ga[i] += adj[i];
        }
        if (double* gv = node.grad_sink(1)) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gv[j] += adj[i * n + j];
          }
        }
      });
}

Tensor unfold(const Tensor& input, std::size_t kh, std::size_t kw) {
  if (input.rank() != 4) {
    throw DimensionError("unfold requires an [N,C,H,W] tensor, got " +
                         shape_string(input.shape()));
  }
  const std::size_t N = input.shape()[0], C = input.shape()[1];
  const std::size_t H = input.shape()[2], W = input.shape()[3];
  if (kh == 0 || kw == 0 || kh > H || kw > W) {
    throw DimensionError("unfold kernel does not fit input " + shape_string(input.shape()));
  }
  const std::size_t OH = H - kh + 1, OW = W - kw + 1;
  const std::size_t rows = N * OH * OW, cols = C * kh * kw;
  std::vector<double> out(rows * cols);
  const double* p = input.data();
  std::size_t r = 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox, ++r) {
        double* dst = out.data() + r * cols;
        std::size_t c = 0;
        for (std::size_t ch = 0; ch < C; ++ch) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx, ++c) {
              dst[c] = p[((n * C + ch) * H + oy + ky) * W + ox + kx];
            }
          }
        }
      }
    }
  }
  return detail::make_op_output(
      {rows, cols}, std::move(out), promote({&input}), {&input},
      [N, C, H, W, kh, kw, OH, OW, cols](Node& node) {
        const double* adj = node.adjoint->data();
        if (double* gi = node.grad_sink(0)) {
          std::size_t r = 0;
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t oy = 0; oy < OH; ++oy) {
              for (std::size_t ox = 0; ox < OW; ++ox, ++r) {
                const double* src = adj + r * cols;
                std::size_t c = 0;
                for (std::size_t ch = 0; ch < C; ++ch) {
                  for (std::size_t ky = 0; ky < kh; ++ky) {
                    for (std::size_t kx = 0; kx < kw; ++kx, ++c) {
                      gi[((n * C + ch) * H + oy + ky) * W + ox + kx] += src[c];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

}  // namespace cimste
