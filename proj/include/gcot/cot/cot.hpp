#pragma once

#include <memory>
#include <span>
#include <vector>

#include "gcot/cot/prompt.hpp"
#include "gcot/graphdata/adjacency.hpp"
#include "gcot/graphdata/propagation.hpp"
#include "gcot/numcore/ops.hpp"

namespace gcot::cot {

using num::Tape;
using num::Var;

// Single-step building blocks on plain tensors.

/// Σ_l w(0,l) · layers[l].
Tensor fuse_thought(std::span<const Tensor> layers, const Tensor& w);
/// leaky_relu(T·W1 + b1)·W2 + b2.
Tensor condnet_prompts(const Tensor& thought, const PromptState& state);
/// P ⊙ X.
Tensor apply_feature_prompt(const Tensor& prompts, const Tensor& features);
/// Answer embeddings from the last step's final layer. gpf leaves them
/// unchanged (its prompt acts on the features).
Tensor standard_prompt_apply(const Tensor& final_layer, const PromptState& state);

/// Prompt parameters registered on a tape. Members that are not in use
/// stay invalid Vars; the condition-net is only registered when K > 1.
struct PromptVars {
  Var fusion, w1, b1, w2, b2, prompts, projections;
};

/// Which parameters are leaves that receive gradients; the rest are
/// registered as constants.
struct Trainable {
  bool fusion = true;
  bool condnet = true;
  bool standard = true;
};

PromptVars bind(Tape& tape, const PromptState& state, Trainable trainable = {});
/// Parameter tensors in bind order, paired with their Vars; skips
/// non-trainable and unregistered ones.
std::vector<std::pair<Tensor*, Var>> trainable_pairs(PromptState& state, const PromptVars& vars,
                                                    Trainable trainable);

struct CotOutput {
  Tensor answer;                // n×h prompted final embeddings
  std::vector<Tensor> thoughts;  // T_1..T_{K-1}, n×h each
};

/// Per-target-set bookkeeping reused across tuning epochs.
struct ForwardPlan {
  std::vector<std::size_t> targets;
  std::size_t steps = 0;
  bool full = false;
  /// plans[k] drives step k+1 of the chain (index 0 is step 1).
  std::vector<graph::PropagationPlan> plans;
  /// For step k < K: positions of the next step's input rows inside each
  /// layer's row set.
  std::vector<std::vector<std::vector<std::size_t>>> handoff;
  /// Feature rows at each step's input rows.
  std::vector<std::shared_ptr<const num::SparseMatrix>> feature_rows;
  /// Dense features, only kept for chain_features.
  std::shared_ptr<const Tensor> dense_features;
};

/// Frozen encoder bound to one collection's operators. Caches the step-1
/// layer outputs, which depend on no prompt parameter unless the standard
/// prompt is gpf.
class CotModel {
 public:
  CotModel(graph::GraphOperators graph, const encoder::EncoderWeights& weights);

  const graph::GraphOperators& graph() const { return graph_; }
  const encoder::EncoderWeights& weights() const { return weights_; }
  std::size_t num_layers() const { return weights_.num_layers(); }
  /// H^1..H^L of the unprompted features over every node.
  const std::vector<std::shared_ptr<const Tensor>>& base_layers() const { return base_layers_; }

  /// Plan for producing answer rows `targets` (sorted, unique). A full
  /// plan runs every step over all nodes; chain_features always does.
  ForwardPlan prepare(std::span<const std::size_t> targets, const CotConfig& config) const;
  ForwardPlan prepare_full(const CotConfig& config) const;

  /// Tracked forward. The answer Var has one row per plan target; thought
  /// Vars are only returned for full plans.
  struct Trace {
    Var answer;
    std::vector<Var> thoughts;
  };
  Trace forward(Tape& tape, const PromptVars& vars, const PromptState& state, const ForwardPlan& plan) const;

  /// Untracked full-graph forward.
  CotOutput run(const PromptState& state) const;

 private:
  void check_state(const PromptState& state) const;

  graph::GraphOperators graph_;
  encoder::EncoderWeights weights_;
  std::vector<std::shared_ptr<const Tensor>> theta_;
  std::vector<std::shared_ptr<const Tensor>> base_layers_;
  std::shared_ptr<const Tensor> base_projection_;  // X·θ¹
};

/// K-step chain over the whole graph: K-1 rounds of encode → fuse →
/// condition-net → feature prompt, a final encode, then the standard
/// prompt.
CotOutput cot_forward(const graph::GraphOperators& graph, const encoder::EncoderWeights& weights,
                      const PromptState& state);

}  // namespace gcot::cot
