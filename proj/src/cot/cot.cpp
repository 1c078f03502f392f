#include "gcot/cot/cot.hpp"

#include "gcot/error.hpp"
#include "gcot/numcore/kernels.hpp"

namespace gcot::cot {

Tensor fuse_thought(std::span<const Tensor> layers, const Tensor& w) {
  if (layers.empty() || w.rows() != 1 || w.cols() != layers.size()) {
    throw DimensionError("fuse_thought: " + std::to_string(layers.size()) + " layers with weights " +
                         num::shape_string(w));
  }
  Tensor out(layers[0].rows(), layers[0].cols());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].same_shape(out)) throw DimensionError("fuse_thought: layer shapes differ");
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += w(0, l) * layers[l].data()[i];
  }
  return out;
}

Tensor condnet_prompts(const Tensor& thought, const PromptState& st) {
  if (thought.cols() != st.w1.rows()) {
    throw DimensionError("condnet_prompts: thought " + num::shape_string(thought) + " for W1 " +
                         num::shape_string(st.w1));
  }
  Tape tape;
  Var z = num::leaky_relu(num::add_row(num::matmul(tape.constant(thought), tape.constant(st.w1)), tape.constant(st.b1)));
  return num::add_row(num::matmul(z, tape.constant(st.w2)), tape.constant(st.b2)).value();
}

Tensor apply_feature_prompt(const Tensor& prompts, const Tensor& features) {
  if (!prompts.same_shape(features)) {
    throw DimensionError("apply_feature_prompt: " + num::shape_string(prompts) + " vs " +
                         num::shape_string(features));
  }
  return num::hadamard(prompts, features);
}

namespace {

Var answer_from(Var final_layer, const PromptVars& v, StdPromptKind kind) {
  switch (kind) {
    case StdPromptKind::gpf_plus: {
      Var alpha = num::row_softmax(num::matmul(final_layer, num::transpose(v.projections)));
      return num::mul(num::matmul(alpha, v.prompts), final_layer);
    }
    case StdPromptKind::graphprompt: return num::mul_row(final_layer, v.prompts);
    case StdPromptKind::gpf: return final_layer;
  }
  throw ConfigError("unknown standard prompt kind");
}

}  // namespace

Tensor standard_prompt_apply(const Tensor& final_layer, const PromptState& st) {
  Tape tape;
  PromptVars v;
  v.prompts = tape.constant(st.prompts);
  if (st.config.kind == StdPromptKind::gpf_plus) {
    if (st.prompts.cols() != final_layer.cols() || st.projections.cols() != final_layer.cols()) {
      throw DimensionError("standard_prompt_apply: prompts " + num::shape_string(st.prompts) + " for embeddings " +
                           num::shape_string(final_layer));
    }
    v.projections = tape.constant(st.projections);
  }
  return answer_from(tape.constant(final_layer), v, st.config.kind).value();
}

PromptVars bind(Tape& tape, const PromptState& st, Trainable tr) {
  auto reg = [&tape](const Tensor& t, bool train) { return train ? tape.parameter(t) : tape.constant(t); };
  PromptVars v;
  v.fusion = reg(st.fusion, tr.fusion);
  if (st.config.steps > 1) {
    v.w1 = reg(st.w1, tr.condnet);
    v.b1 = reg(st.b1, tr.condnet);
    v.w2 = reg(st.w2, tr.condnet);
    v.b2 = reg(st.b2, tr.condnet);
  }
  v.prompts = reg(st.prompts, tr.standard);
  if (st.config.kind == StdPromptKind::gpf_plus) v.projections = reg(st.projections, tr.standard);
  return v;
}

std::vector<std::pair<Tensor*, Var>> trainable_pairs(PromptState& st, const PromptVars& v, Trainable tr) {
  std::vector<std::pair<Tensor*, Var>> out;
  auto add = [&out](Tensor& t, Var var, bool train) {
    if (train && var.valid()) out.emplace_back(&t, var);
  };
  add(st.fusion, v.fusion, tr.fusion);
  add(st.w1, v.w1, tr.condnet);
  add(st.b1, v.b1, tr.condnet);
  add(st.w2, v.w2, tr.condnet);
  add(st.b2, v.b2, tr.condnet);
  add(st.prompts, v.prompts, tr.standard);
  add(st.projections, v.projections, tr.standard);
  return out;
}

CotModel::CotModel(graph::GraphOperators graph, const encoder::EncoderWeights& weights)
    : graph_(std::move(graph)), weights_(weights) {
  if (graph_.feature_dim() != weights_.input_dim()) {
    throw DimensionError("encoder expects " + std::to_string(weights_.input_dim()) + " input features, dataset has " +
                         std::to_string(graph_.feature_dim()));
  }
  for (const auto& t : weights_.theta) theta_.push_back(std::make_shared<const Tensor>(t));
  Tensor proj;
  num::kernels::spmm(*graph_.features, weights_.theta[0], proj);
  base_projection_ = std::make_shared<const Tensor>(std::move(proj));
  for (auto& h : encoder::encode_sparse(*graph_.features, *graph_.adjacency, weights_)) {
    base_layers_.push_back(std::make_shared<const Tensor>(std::move(h)));
  }
}

void CotModel::check_state(const PromptState& st) const {
  st.config.validate();
  const std::size_t h = weights_.hidden_dim(), d = weights_.input_dim(), s = st.config.cond_hidden;
  bool ok = st.fusion.rows() == 1 && st.fusion.cols() == num_layers() && st.w1.rows() == h && st.w1.cols() == s &&
            st.b1.rows() == 1 && st.b1.cols() == s && st.w2.rows() == s && st.w2.cols() == d && st.b2.rows() == 1 &&
            st.b2.cols() == d;
  switch (st.config.kind) {
    case StdPromptKind::gpf_plus:
      ok = ok && st.prompts.cols() == h && st.projections.same_shape(st.prompts) && st.prompts.rows() >= 1;
      break;
    case StdPromptKind::gpf: ok = ok && st.prompts.rows() == 1 && st.prompts.cols() == d; break;
    case StdPromptKind::graphprompt: ok = ok && st.prompts.rows() == 1 && st.prompts.cols() == h; break;
  }
  if (!ok) {
    throw DimensionError("prompt state does not fit encoder (L=" + std::to_string(num_layers()) +
                         ", d=" + std::to_string(d) + ", h=" + std::to_string(h) + ")");
  }
}

ForwardPlan CotModel::prepare_full(const CotConfig& config) const {
  config.validate();
  ForwardPlan fp;
  fp.steps = config.steps;
  fp.full = true;
  fp.targets.resize(graph_.num_nodes());
  for (std::size_t i = 0; i < fp.targets.size(); ++i) fp.targets[i] = i;
  const auto plan = graph::full_plan(graph_.adjacency, graph_.adjacency_t, num_layers());
  fp.plans.assign(config.steps, plan);
  fp.feature_rows.assign(config.steps, graph_.features);
  if (config.chain_features) fp.dense_features = std::make_shared<const Tensor>(graph_.features->to_dense());
  return fp;
}

ForwardPlan CotModel::prepare(std::span<const std::size_t> targets, const CotConfig& config) const {
  // The cumulative feature chain needs every earlier step's prompts at
  // every later step's rows, so it always runs on the whole graph.
  if (config.chain_features) return prepare_full(config);
  config.validate();
  ForwardPlan fp;
  fp.steps = config.steps;
  fp.targets.assign(targets.begin(), targets.end());
  const std::size_t k = config.steps, layers = num_layers();
  fp.plans.resize(k);
  fp.handoff.resize(k);
  fp.feature_rows.resize(k);
  fp.plans[k - 1] = graph::plan_for_targets(*graph_.adjacency, targets, layers);
  fp.targets = fp.plans[k - 1].targets();
  // Step 1 reads the cached base layers unless gpf prompts its input.
  const std::size_t first_planned = config.kind == StdPromptKind::gpf ? 0 : 1;
  for (std::size_t s = k - 1; s-- > first_planned;) {
    fp.plans[s] = graph::plan_for_targets(*graph_.adjacency, fp.plans[s + 1].inputs(), layers);
  }
  for (std::size_t s = first_planned; s + 1 < k; ++s) {
    for (std::size_t l = 1; l <= layers; ++l) {
      fp.handoff[s].push_back(graph::positions_in(fp.plans[s].rows[l], fp.plans[s + 1].inputs()));
    }
  }
  for (std::size_t s = 1; s < k; ++s) {
    fp.feature_rows[s] = std::make_shared<const num::SparseMatrix>(graph_.features->select_rows(fp.plans[s].inputs()));
  }
  return fp;
}

CotModel::Trace CotModel::forward(Tape& tape, const PromptVars& v, const PromptState& st,
                                  const ForwardPlan& fp) const {
  check_state(st);
  if (fp.steps != st.config.steps) throw DimensionError("forward plan built for a different K");
  const std::size_t k_steps = fp.steps, layers = num_layers();
  const bool gpf = st.config.kind == StdPromptKind::gpf;
  const bool chain = st.config.chain_features;
  if (chain && !fp.full) throw DimensionError("chain_features needs a full forward plan");

  std::vector<Var> theta;
  for (const auto& t : theta_) theta.push_back(tape.constant(t));

  // Rows of `layer_vars` restricted to the next step's inputs, fused.
  auto thought_from = [&](const std::vector<Var>& layer_vars, std::size_t step) {
    std::vector<Var> picked;
    for (std::size_t l = 0; l < layers; ++l) {
      picked.push_back(fp.full ? layer_vars[l] : num::gather_rows(layer_vars[l], fp.handoff[step][l]));
    }
    return num::weighted_sum(picked, v.fusion);
  };

  Trace trace;
  Var thought, final_layer, prev_features;
  for (std::size_t step = 0; step < k_steps; ++step) {
    const bool last = step + 1 == k_steps;
    std::vector<Var> layer_vars;
    if (step == 0 && !gpf) {
      if (last) {
        Var h = tape.constant(base_layers_[layers - 1]);
        final_layer = fp.full ? h : num::gather_rows(h, fp.targets);
      } else {
        std::vector<Var> picked;
        for (std::size_t l = 0; l < layers; ++l) {
          Var h = tape.constant(base_layers_[l]);
          picked.push_back(fp.full ? h : num::gather_rows(h, fp.plans[1].inputs()));
        }
        thought = num::weighted_sum(picked, v.fusion);
      }
      if (chain) prev_features = tape.constant(fp.dense_features);
    } else {
      const auto& plan = fp.plans[step];
      Var first;
      if (step == 0) {
        // gpf: (X + 1·vᵀ)θ¹ = Xθ¹ + 1·(vθ¹).
        Var offset = num::matmul(v.prompts, theta[0]);
        if (chain) {
          Var x = tape.constant(fp.dense_features);
          prev_features = num::add_row(x, v.prompts);
          first = num::matmul(prev_features, theta[0]);
        } else {
          Var base = tape.constant(base_projection_);
          first = num::add_row(fp.full ? base : num::gather_rows(base, plan.inputs()), offset);
        }
      } else {
        Var z = num::leaky_relu(num::add_row(num::matmul(thought, v.w1), v.b1));
        if (chain) {
          Var p = num::add_row(num::matmul(z, v.w2), v.b2);
          prev_features = num::mul(p, prev_features);
          first = num::matmul(prev_features, theta[0]);
        } else {
          first = num::prompted_projection(z, v.w2, v.b2, fp.feature_rows[step], theta[0]);
        }
      }
      layer_vars = encoder::propagate(plan, first, theta, weights_.final_relu);
      if (last) {
        final_layer = layer_vars.back();
      } else {
        thought = thought_from(layer_vars, step);
      }
    }
    if (!last && fp.full) trace.thoughts.push_back(thought);
  }
  trace.answer = answer_from(final_layer, v, st.config.kind);
  return trace;
}

CotOutput CotModel::run(const PromptState& st) const {
  Tape tape;
  const PromptVars v = bind(tape, st, Trainable{false, false, false});
  const auto trace = forward(tape, v, st, prepare_full(st.config));
  CotOutput out{trace.answer.value(), {}};
  for (Var t : trace.thoughts) out.thoughts.push_back(t.value());
  return out;
}

CotOutput cot_forward(const graph::GraphOperators& graph, const encoder::EncoderWeights& weights,
                      const PromptState& state) {
  return CotModel(graph, weights).run(state);
}

}  // namespace gcot::cot
