#include "seqagree/autodiff/graph.hpp"

#include <string>

#include "seqagree/errors.hpp"

namespace seqagree::ad {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kMse: return "mse";
    case OpKind::kSum: return "sum";
    case OpKind::kScale: return "scale";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kBceWithLogits: return "bce_with_logits";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!graph_) throw GraphError("value() on an unbound Var");
  return graph_->value(*this);
}

namespace {
void require_finite(const Tensor& t, std::string_view what) {
  if (!t.all_finite()) throw NonFiniteError(std::string(what) + ": non-finite input");
}
}  // namespace

Var Graph::leaf(Tensor& t) {
  require_finite(t, "leaf");
  Node n;
  n.kind = OpKind::kLeaf;
  n.external = &t;
  n.requires_grad = t.requires_grad();
  n.grad_sink = t.requires_grad() ? &t : nullptr;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::leaf(const Tensor& t) {
  require_finite(t, "leaf");
  Node n;
  n.kind = OpKind::kLeaf;
  n.external = &t;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::parameter(Parameter& p, bool trainable) {
  Var v = trainable ? leaf(p.tensor()) : leaf(static_cast<const Tensor&>(p.tensor()));
  nodes_.back().param = &p;
  return v;
}

Var Graph::parameter(const Parameter& p) {
  Var v = leaf(p.tensor());
  nodes_.back().param = &p;
  return v;
}

Var Graph::constant(Tensor t) {
  require_finite(t, "constant");
  t.set_requires_grad(false);
  Node n;
  n.kind = OpKind::kConstant;
  n.owned = std::move(t);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::detach(Var v) {
  check_owner(v, "detach");
  return constant(value(v));
}

const Graph::Node& Graph::node(Var v) const {
  check_owner(v, "graph");
  return nodes_[v.id()];
}

void Graph::check_owner(Var v, std::string_view op) const {
  if (v.graph_ != this || v.id() >= nodes_.size()) {
    throw GraphError(std::string(op) + ": variable does not belong to this graph");
  }
}

const Tensor& Graph::value(Var v) const { return node_value(node(v)); }

std::span<const double> Graph::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad_sink) return n.grad_sink->grad();
  if (n.external) return n.external->grad();
  return n.owned.grad();
}

std::span<double> Graph::node_grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad_sink) return n.grad_sink->grad();
  return n.owned.grad();
}

Var Graph::record(OpKind kind, std::span<const Var> inputs, Tensor output,
                  const OpAttributes& attrs) {
  if (!output.all_finite()) {
    throw NonFiniteError(std::string(op_name(kind)) + ": non-finite value produced");
  }
  Node n;
  n.kind = kind;
  n.attrs = attrs;
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    const Node& src = nodes_[in.id()];
    if (src.param) src.param->note_access();
    n.requires_grad = n.requires_grad || src.requires_grad;
    n.inputs.push_back(in.id());
  }
  output.set_requires_grad(n.requires_grad);
  n.owned = std::move(output);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Graph::backward(Var loss) {
  if (nodes_.empty() || !loss.valid()) throw GraphError("backward: called before any forward op");
  check_owner(loss, "backward");
  if (backward_done_) throw GraphError("backward: already run on this graph");
  const Tensor& lv = value(loss);
  if (lv.size() != 1) throw GraphError("backward: loss must be scalar, got " + shape_string(lv.shape()));
  backward_done_ = true;
  visited_ = 0;
  if (!nodes_[loss.id()].requires_grad) return;
  node_grad(loss.id())[0] += 1.0;
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || n.kind == OpKind::kLeaf || n.kind == OpKind::kConstant) continue;
    backward_node(id);
    ++visited_;
  }
}

}  // namespace seqagree::ad
