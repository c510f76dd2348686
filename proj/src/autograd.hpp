#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace wvad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run record of a forward computation. Nodes are appended in
// evaluation order, so walking them backwards is a reverse topological order.
class Tape {
 public:
  // Propagates the gradient of node `self` into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an op output. The backward rule is dropped when no input needs a
  // gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and accumulates gradients into every node that
  // requires one. Calling backward twice on the same tape accumulates.
  void backward(Var root);
  void zero_grad();

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient accumulator for an input; allocated (zeroed) on first use.
  Tensor& grad_slot(std::size_t id);
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }

  // Node ids in the order backward() last visited them.
  const std::vector<std::size_t>& last_backward_order() const noexcept { return backward_order_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
};

// Differentiable operations. Unless stated, operands are rank-2 (rank-1 is
// treated as a single row) and results are freshly recorded on the tape of the
// first operand.
namespace ops {

Var matmul(Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Var a, Var b);  // [m x k] * [n x k]^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var add_row(Var a, Var row);  // a[m x n] + row[n], broadcast over rows
Var add_col(Var a, Var col);  // a[m x n] + col[m], broadcast over columns
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var gelu(Var a);  // tanh approximation
Var relu(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);  // [m x n] -> [m]
Var softmax_rows(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var reshape(Var a, Shape shape);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var dropout(Var a, double rate, std::mt19937_64& rng);

// Depthwise-separable temporal convolution with replicate "same" padding:
// x[T x C], depth_kernel[C x W] (W odd), point_kernel[C x C'] -> [T x C'].
Var dws_conv1d(Var x, Var depth_kernel, Var point_kernel);

// Mean of the k largest entries; ties are resolved towards lower indices.
Var topk_mean(Var scores, std::size_t k);

// Indices of the k largest entries in descending-score order, ties towards
// lower indices. Shared by topk_mean and the hard/easy snippet miners.
std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k);

}  // namespace ops
}  // namespace wvad
