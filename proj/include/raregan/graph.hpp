#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "raregan/tensor.hpp"

namespace raregan {

class Graph;
class ParamStore;

/// Handle to a node on a Graph tape.
class Var {
 public:
  Var() = default;
  const Tensor& val() const;
  Graph* graph() const { return graph_; }
  std::size_t index() const { return index_; }
  explicit operator bool() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t i) : graph_(g), index_(i) {}
  Graph* graph_ = nullptr;
  std::size_t index_ = 0;
};

/// Eager reverse-mode tape over tensors. Values are computed when an op is
/// built; creation order is a valid topological order, so backward() is a
/// single reverse sweep. Every op checks its output for NaN/Inf and throws.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf with no gradient (input data, frozen weights).
  Var constant(Tensor value);

  /// Leaf bound to a named parameter in `store`; backward() accumulates the
  /// gradient back into the store.
  Var param(ParamStore& store, const std::string& name);

  /// Reverse sweep from a scalar node. Flushes parameter gradients into
  /// their stores and verifies they are finite.
  void backward(const Var& root);

  const Tensor& value(const Var& v) const;
  /// Gradient buffer of a node; empty tensor if the node was not reached.
  const Tensor& grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // --- internal op-builder plumbing (used by the free functions below) ---
  using BackwardFn = std::function<void(Graph&, std::size_t)>;
  std::size_t emplace(const char* op, Tensor value,
                      std::vector<std::size_t> parents, BackwardFn backward);
  Var wrap(std::size_t i) { return Var(this, i); }
  Tensor& grad_buf(std::size_t i);
  bool needs_grad(std::size_t i) const { return nodes_[i].needs_grad; }
  const Tensor& node_value(std::size_t i) const { return nodes_[i].value; }
  const Tensor& node_grad(std::size_t i) const { return nodes_[i].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    const char* op = "";
    bool needs_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward_fn;
  };
  struct Binding {
    ParamStore* store;
    std::string name;
    std::size_t node;
  };
  std::vector<Node> nodes_;
  std::vector<Binding> bindings_;
};

// ---- elementwise / arithmetic ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

// ---- matrix ops ----
Var matmul(Var a, Var b);     // (m x k) * (k x n)
Var matmul_nt(Var a, Var b);  // (m x k) * (n x k)^T -> m x n
Var add_rowvec(Var x, Var r);
Var add_colvec(Var x, Var c);
Var sub_colvec(Var x, Var c);
Var div_colvec(Var x, Var c);
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, std::size_t lo, std::size_t hi);
Var gather_rows(Var w, std::vector<std::size_t> rows);
Var row_sum(Var x);  // m x n -> m x 1
Var sum_all(Var x);
Var mean_all(Var x);
Var sum_sq(Var x);
Var mean_rows(Var x);  // m x n -> 1 x n

// ---- activations ----
Var sigmoid(Var x);
Var tanh(Var x);
Var leaky_relu(Var x, double slope);
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var sqrt(Var x);

// Row softmax with max subtraction; rows sum to 1.
Var softmax_rows(Var x);
// Row logsumexp; with append_zero, an implicit extra zero logit per row.
Var logsumexp_rows(Var x, bool append_zero);
// out[i] = x[i, idx[i]] as an m x 1 column.
Var pick_cols(Var x, std::vector<std::size_t> idx);

// Coordinate-wise max over time steps, restricted to positions where
// mask(row, t) != 0. Every row must have at least one kept position.
Var masked_max_time(const std::vector<Var>& steps, const Tensor& mask);

// Inverted dropout: zero with probability `rate`, survivors scaled by
// 1/(1-rate). Identity when not training or rate == 0.
Var dropout(Var x, double rate, bool training, std::mt19937_64& rng);

// Column-wise weight normalization: out[:,j] = g[j] * v[:,j] / ||v[:,j]||.
Var weight_norm(Var v, Var g);

}  // namespace raregan
