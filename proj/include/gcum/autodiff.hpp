#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "gcum/tensor.hpp"

// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Graph records every operation as it is evaluated. Operations are free
// functions over Var handles; a Var is only meaningful together with the Graph
// that produced it. Nodes are appended in evaluation order, so the tape is
// already topologically sorted and backward() is a single reverse sweep.
namespace gcum::ad {

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  // Convenience for 1×1 results.
  double item() const;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Sweeps the tape once from a 1×1 loss. A Graph supports a single sweep.
  void backward(Var loss);
  bool backward_done() const noexcept { return backward_done_; }

  // Gradient recorded for v; all zeros when nothing flowed into it.
  Tensor grad(Var v) const;

  // Used by operation implementations.
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  std::span<const double> grad_of(std::size_t id) const { return nodes_[id].grad; }
  // Writable gradient buffer of id, zero-filled on first access; empty when id
  // does not require a gradient.
  std::span<double> grad_sink(std::size_t id);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---- linear algebra ----
Var matmul(Var a, Var b);
Var transpose(Var a);
// Joins along axis 0 (stack rows) or axis 1 (append columns).
Var concat(std::span<const Var> parts, int axis);
Var concat_rows(std::initializer_list<Var> parts);
Var select_rows(Var a, std::span<const std::size_t> rows);
Var pick(Var a, std::size_t row, std::size_t col);

// ---- elementwise ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// a[m×n] + row[1×n] applied to every row.
Var add_row(Var a, Var row);
Var scale(Var a, double c);
// a * s for a 1×1 tensor s.
Var mul_scalar(Var a, Var s);
Var add_scalar(Var a, double c);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sqrt(Var a);
// max(a, c) elementwise; the gradient at a == c is taken as zero.
Var max_const(Var a, double c);

// ---- normalisers ----
Var softmax_rows(Var a);
// Row-wise log(softmax(a)) evaluated as a − max − log Σ exp(a − max).
Var log_softmax_rows(Var a);
// Rank 1 input: whole vector. Rank 2 input: each row. Zero rows stay zero.
Var l2_normalize(Var a);
inline constexpr double kNormGuard = 1e-12;

// ---- reductions ----
Var sum(Var a);
Var mean(Var a);
// Column sums / means: m×n → 1×n.
Var sum_rows(Var a);
Var mean_rows(Var a);

}  // namespace gcum::ad
