#include "gcot/numcore/tape.hpp"

#include "gcot/error.hpp"

namespace gcot::num {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::matmul: return "matmul";
    case OpKind::spmm: return "spmm";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::scale: return "scale";
    case OpKind::add_row: return "add_row";
    case OpKind::mul_row: return "mul_row";
    case OpKind::row_softmax: return "row_softmax";
    case OpKind::weighted_sum: return "weighted_sum";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::segment_sum: return "segment_sum";
    case OpKind::group_mean: return "group_mean";
    case OpKind::cosine_matrix: return "cosine_matrix";
    case OpKind::rowwise_cosine: return "rowwise_cosine";
    case OpKind::pick: return "pick";
    case OpKind::row_logsumexp: return "row_logsumexp";
    case OpKind::sum: return "sum";
    case OpKind::hconcat: return "hconcat";
    case OpKind::transpose: return "transpose";
    case OpKind::prompted_projection: return "prompted_projection";
  }
  return "unknown";
}

Var Tape::push(Node node) {
  if (!node.value->all_finite()) {
    throw NumericError(std::string(op_name(node.kind)) + " produced non-finite values");
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::parameter(Tensor value) {
  return push(Node{OpKind::parameter, {}, std::make_shared<const Tensor>(std::move(value)), {},
                   true, nullptr});
}

Var Tape::constant(Tensor value) {
  return constant(std::make_shared<const Tensor>(std::move(value)));
}

Var Tape::constant(std::shared_ptr<const Tensor> value) {
  return push(Node{OpKind::constant, {}, std::move(value), {}, false, nullptr});
}

Var Tape::record(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
  bool tracked = false;
  for (NodeId in : inputs) {
    if (in >= nodes_.size()) throw NumericError("tape input precedes no recorded node");
    tracked = tracked || nodes_[in].requires_grad;
  }
  return push(Node{kind, std::move(inputs), std::make_shared<const Tensor>(std::move(value)), {},
                   tracked, tracked ? std::move(backward) : nullptr});
}

void Tape::accumulate(NodeId id, Tensor&& delta) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return;
  if (!delta.same_shape(*n.value)) {
    throw DimensionError(std::string("gradient shape ") + shape_string(delta) + " for " +
                         op_name(n.kind) + " node of shape " + shape_string(*n.value));
  }
  if (n.grad.empty()) {
    n.grad = std::move(delta);
    return;
  }
  auto g = n.grad.data();
  auto d = delta.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
}

void Tape::accumulate(NodeId id, const Tensor& delta) { accumulate(id, Tensor(delta)); }

void Tape::backward(Var loss) {
  if (&loss.tape() != this || loss.id() >= nodes_.size()) {
    throw NumericError("backward: loss is not a node of this tape");
  }
  const Tensor& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + shape_string(lv));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor(1, 1, 1.0);
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    // Empty gradient: not reachable from the loss.
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value->rows(), n.value->cols());
  return n.grad;
}

}  // namespace gcot::num
