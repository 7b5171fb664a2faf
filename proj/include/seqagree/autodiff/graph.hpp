#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "seqagree/autodiff/tensor.hpp"

namespace seqagree::ad {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kConcat,
  kSlice,
  kTanh,
  kSigmoid,
  kRelu,
  kSoftmax,
  kConv1d,
  kMse,
  kSum,
  kScale,
  kTranspose,
  kBceWithLogits,
};

std::string_view op_name(OpKind kind);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Graph;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

struct OpAttributes {
  int axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double factor = 1.0;
};

/// Tape of operations recorded during one forward pass. Nodes are appended
/// in execution order, so inputs always precede their consumers and a single
/// reverse sweep computes every gradient.
class Graph {
 public:
  Graph() { nodes_.reserve(512); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Binds external storage. Gradients accumulate into `t.grad()` when
  /// `t.requires_grad()` is set.
  Var leaf(Tensor& t);
  /// Read-only binding; never receives gradient.
  Var leaf(const Tensor& t);

  Var parameter(Parameter& p, bool trainable = true);
  Var parameter(const Parameter& p);

  Var constant(Tensor t);
  /// Copies the value of `v` into a gradient-free constant.
  Var detach(Var v);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const;
  /// Gradient buffer of a node; for leaves this is the bound tensor's grad.
  std::span<const double> grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  OpKind kind(Var v) const { return node(v).kind; }

  /// Reverse sweep from a scalar loss.
  void backward(Var loss);
  /// Number of nodes whose backward rule ran in the last sweep.
  std::size_t nodes_visited() const { return visited_; }

  // Used by op implementations.
  Var record(OpKind kind, std::span<const Var> inputs, Tensor output,
             const OpAttributes& attrs = {});
  void check_owner(Var v, std::string_view op) const;

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    boost::container::small_vector<std::uint32_t, 3> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* grad_sink = nullptr;
    const Parameter* param = nullptr;
    bool requires_grad = false;
    OpAttributes attrs;
  };

  const Node& node(Var v) const;
  const Tensor& node_value(const Node& n) const { return n.external ? *n.external : n.owned; }
  std::span<double> node_grad(std::uint32_t id);
  void backward_node(std::uint32_t id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::size_t visited_ = 0;
};

// Op constructors. All matrix ops treat rank-1 tensors as a single row and
// produce rank-2 outputs; reductions produce shape {1}.

/// (m x k) . (k x n)
Var matmul(Var a, Var b);
/// Same shapes, or `b` a single row broadcast over the rows of `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise; same shapes.
Var mul(Var a, Var b);
/// axis 0 stacks rows, axis 1 joins columns.
Var concat(std::span<const Var> parts, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
/// axis 0 normalises each column, axis 1 each row.
Var softmax(Var a, int axis);
/// Signal (T x C_in) convolved with filters {K, C_in, C_out}; stride 1,
/// zero same-padding with (K-1)/2 leading zeros. Output T x C_out.
Var conv1d_same(Var signal, Var filters);
/// Mean of squared differences over all entries.
Var mse(Var a, Var b);
Var sum(Var a);
Var scale(Var a, double factor);
Var transpose(Var a);
/// Mean binary cross-entropy of logits against targets in [0, 1].
Var bce_with_logits(Var logits, Var targets);

}  // namespace seqagree::ad
