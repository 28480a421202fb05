#pragma once

// Tape-based reverse-mode automatic differentiation over dense tensors.
//
// A Graph is an append-only list of nodes in topological order; every op
// appends one node whose backward closure reads the node's upstream
// gradient and accumulates into its inputs. Parameters live outside any
// graph and receive gradients when a graph is flushed, so a fresh Graph
// per document (or per step) is the normal usage pattern.

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atlop/tensor.hpp"

namespace atlop::ad {

/// A trainable tensor that outlives graphs. Gradients accumulate additively
/// until `zero_grad()` is called.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value)
      : name(std::move(name)), value(std::move(value)), grad(this->value.shape(), 0.0) {}

  std::string name;
  Tensor value;
  Tensor grad;
  bool requires_grad = true;

  void zero_grad() { grad.fill(0.0); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

using BackwardFn = std::function<void(Graph&, std::size_t self)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf with its own gradient buffer (not tied to a Parameter).
  Var variable(Tensor value);
  /// Leaf that reads `p.value` in place; repeated calls return the same node.
  Var parameter(Parameter& p);

  /// Appends an op node. `fn` may be empty for non-differentiable results.
  Var record(std::string_view op, std::span<const Var> inputs, Tensor value, BackwardFn fn);
  Var record(std::string_view op, std::initializer_list<Var> inputs, Tensor value, BackwardFn fn) {
    return record(op, std::span<const Var>(inputs.begin(), inputs.size()), std::move(value), std::move(fn));
  }

  /// Seeds d(root)/d(root) = 1 and visits every node at or before `root`
  /// once in reverse order. Parameter gradients are added into their
  /// Parameter objects unless `flush_parameters` is false, in which case
  /// `flush_parameter_grads()` must be called later.
  void backward(Var root, bool flush_parameters = true);
  void flush_parameter_grads();

  std::size_t size() const noexcept { return nodes_.size(); }
  std::string_view op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient of node `id`; zeros if nothing flowed into it.
  const Tensor& grad(std::size_t id) const;

  /// For backward closures: the gradient buffer of `id`, allocated on first
  /// use, or nullptr when `id` does not require a gradient.
  Tensor* grad_sink(std::size_t id);
  /// For backward closures: the upstream gradient of the node being visited.
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    const Tensor* external = nullptr;
    Parameter* param = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
  mutable Tensor zeros_cache_;
};

// ---- Linear algebra ---------------------------------------------------------

/// [m x k] . [k x n] -> [m x n]; rank-1 operands read as a single row.
Var matmul(Var a, Var b);
/// [m x k] . [n x k]^T -> [m x n]
Var matmul_nt(Var a, Var b);

// ---- Elementwise --------------------------------------------------------------
// Binary ops take equal shapes, or one side of size 1 broadcast as a scalar.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var tanh(Var x);
Var sigmoid(Var x);
Var exp(Var x);
/// Throws DomainError on any non-positive input.
Var log(Var x);
/// tanh approximation of GELU.
Var gelu(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// ---- Reductions ---------------------------------------------------------------

Var sum(Var x);
Var mean(Var x);
/// Removes `axis`; max-shifted for stability.
Var logsumexp(Var x, std::size_t axis);
/// Same shape as `x`; normalized along `axis`.
Var softmax(Var x, std::size_t axis);
/// Mean over `axis`, which is removed.
Var mean_axis(Var x, std::size_t axis);

// ---- Structural -----------------------------------------------------------------

/// x[m x n] + bias[n] on every row.
Var add_row_bias(Var x, Var bias);
/// Rows of x[m x n] normalized to zero mean / unit variance, then scaled.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Selects rows (repetition allowed); gradient scatters back.
Var gather_rows(Var x, std::span<const std::size_t> rows);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Stacks [n] or [m x n] parts vertically.
Var concat_rows(std::span<const Var> parts);
Var reshape(Var x, Shape shape);
/// Inverted dropout; identity when `rate` is 0.
Var dropout(Var x, double rate, std::mt19937_64& rng);

// ---- Gradient checking ----------------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool passed = true;

  const GradCheckEntry& worst() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor: rel = |a - n| / max(|a|, |n|, abs_floor).
  double abs_floor = 1e-6;
};

/// Compares backward() against central differences for every entry of
/// every parameter. `loss` must build a scalar from a fresh graph and be
/// deterministic. Parameter gradients are zeroed before and after.
GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

}  // namespace atlop::ad
