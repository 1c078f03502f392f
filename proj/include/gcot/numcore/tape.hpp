#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gcot/numcore/tensor.hpp"

namespace gcot::num {

using NodeId = std::uint32_t;

enum class OpKind {
  parameter,
  constant,
  matmul,
  spmm,
  add,
  sub,
  mul,
  relu,
  leaky_relu,
  scale,
  add_row,
  mul_row,
  row_softmax,
  weighted_sum,
  gather_rows,
  segment_sum,
  group_mean,
  cosine_matrix,
  rowwise_cosine,
  pick,
  row_logsumexp,
  sum,
  hconcat,
  transpose,
  prompted_projection,
};

const char* op_name(OpKind kind);

class Tape;

/// A tensor registered on a tape: the handle is the tape node id.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Reverse-mode differentiation record for one training step. Nodes are
/// appended in evaluation order, so inputs always precede their consumers.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf whose gradient is wanted.
  Var parameter(Tensor value);
  /// Leaf that never receives a gradient. The shared form avoids copying
  /// large inputs such as feature matrices.
  Var constant(Tensor value);
  Var constant(std::shared_ptr<const Tensor> value);

  const Tensor& value(NodeId id) const { return *nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every tracked node.
  /// Throws when loss is not a 1×1 node of this tape.
  void backward(Var loss);

  /// Gradient after backward(); zeros of the node's shape when the node
  /// received none.
  Tensor grad(Var v) const;

  // Interface for operation implementations.
  Var record(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward);
  const Tensor& grad_of(NodeId id) const { return nodes_.at(id).grad; }
  void accumulate(NodeId id, Tensor&& delta);
  void accumulate(NodeId id, const Tensor& delta);

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    std::shared_ptr<const Tensor> value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace gcot::num
