#include "gcot/pretrain/pretrain.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "gcot/error.hpp"
#include "gcot/numcore/adam.hpp"

namespace gcot::pretrain {

using num::Tape;
using num::Tensor;
using num::Var;

namespace {
// Domain tag so sampling streams never coincide with other seeded streams.
constexpr std::uint64_t kSampleStream = 0x70726574726e;  // "pretrn"
constexpr std::uint64_t kInitStream = 0x656e63696e6974;  // "encinit"
// relu can zero a node's whole embedding, leaving cosine undefined; a
// sample that touches such a node sits out the epoch. Dead rows pass no
// gradient anyway.
std::vector<LinkSample> live_samples(const Tensor& emb, const std::vector<LinkSample>& samples) {
  std::vector<char> dead(emb.rows());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto row = emb.row(i);
    dead[i] = std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; });
  }
  std::vector<LinkSample> out;
  for (const auto& s : samples) {
    bool ok = !dead[s.anchor] && !dead[s.positive];
    for (std::size_t b : s.negatives) ok = ok && !dead[b];
    if (ok) out.push_back(s);
  }
  return out;
}

}  // namespace

void PretrainConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("pretrain tau must be > 0");
  if (negatives < 1) throw ConfigError("pretrain negatives must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("pretrain learning rate must be >= 0");
  if (anchors_per_epoch && *anchors_per_epoch == 0) throw ConfigError("anchors_per_epoch must be >= 1");
}

std::vector<LinkSample> sample_link_pairs(const graph::GraphCollection& c, const PretrainConfig& config,
                                          std::size_t epoch) {
  config.validate();
  if (c.num_edges() == 0) throw InsufficientDataError(c.meta.name + ": no edges, unusable for pre-training");
  const auto offsets = c.node_offsets();
  const std::size_t n = offsets.back();
  std::vector<std::vector<std::size_t>> neighbours(n);
  std::vector<std::size_t> graph_of(n);
  for (std::size_t g = 0; g < c.graphs.size(); ++g) {
    for (std::size_t i = offsets[g]; i < offsets[g + 1]; ++i) graph_of[i] = g;
    for (auto [u, v] : c.graphs[g].edges) {
      neighbours[offsets[g] + u].push_back(offsets[g] + v);
      neighbours[offsets[g] + v].push_back(offsets[g] + u);
    }
  }
  for (auto& nb : neighbours) std::sort(nb.begin(), nb.end());

  std::vector<std::size_t> eligible;
  for (std::size_t o = 0; o < n; ++o) {
    const std::size_t g = graph_of[o];
    const std::size_t non_neighbours = (offsets[g + 1] - offsets[g]) - 1 - neighbours[o].size();
    if (!neighbours[o].empty() && non_neighbours >= config.negatives) eligible.push_back(o);
  }

  num::Rng rng = num::make_rng({config.seed, kSampleStream, epoch});
  std::vector<std::size_t> anchors;
  if (config.anchors_per_epoch) {
    for (std::size_t i = 0; i < *config.anchors_per_epoch && !eligible.empty(); ++i) {
      anchors.push_back(eligible[num::uniform_index(eligible.size(), rng)]);
    }
  } else {
    anchors = eligible;
  }

  std::vector<LinkSample> out;
  out.reserve(anchors.size());
  for (std::size_t o : anchors) {
    const auto& nb = neighbours[o];
    const std::size_t g = graph_of[o];
    const std::size_t begin = offsets[g], size = offsets[g + 1] - offsets[g];
    LinkSample s{o, nb[num::uniform_index(nb.size(), rng)], {}};
    // Rejection sampling without replacement; eligibility guarantees
    // enough candidates exist.
    while (s.negatives.size() < config.negatives) {
      const std::size_t b = begin + num::uniform_index(size, rng);
      if (b == o || std::binary_search(nb.begin(), nb.end(), b)) continue;
      if (std::find(s.negatives.begin(), s.negatives.end(), b) != s.negatives.end()) continue;
      s.negatives.push_back(b);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Var pretrain_loss(Var embeddings, const std::vector<LinkSample>& samples, double tau, bool include_positive) {
  if (!(tau > 0.0)) throw ConfigError("pretrain tau must be > 0");
  if (samples.empty()) throw InsufficientDataError("pretrain_loss: no link samples");
  const std::size_t k = samples.front().negatives.size();
  std::vector<std::size_t> anchors, positives;
  std::vector<std::vector<std::size_t>> negatives(k);
  for (const auto& s : samples) {
    if (s.negatives.size() != k) throw DimensionError("pretrain_loss: samples disagree on negative count");
    anchors.push_back(s.anchor);
    positives.push_back(s.positive);
    for (std::size_t j = 0; j < k; ++j) negatives[j].push_back(s.negatives[j]);
  }
  Var a = num::gather_rows(embeddings, anchors);
  Var pos = num::scale(num::rowwise_cosine(a, num::gather_rows(embeddings, positives)), 1.0 / tau);
  Var denom = include_positive ? pos : Var();
  for (std::size_t j = 0; j < k; ++j) {
    Var sim = num::scale(num::rowwise_cosine(a, num::gather_rows(embeddings, negatives[j])), 1.0 / tau);
    denom = denom.valid() ? num::hconcat(denom, sim) : sim;
  }
  return num::sub(num::sum(num::row_logsumexp(denom)), num::sum(pos));
}

PretrainResult pretrain_run(const graph::GraphCollection& c, const encoder::EncoderConfig& encoder_config,
                            const PretrainConfig& config) {
  config.validate();
  encoder_config.validate();
  if (encoder_config.input_dim != c.meta.feature_dim) {
    throw DimensionError("encoder input dim " + std::to_string(encoder_config.input_dim) + " vs dataset features " +
                         std::to_string(c.meta.feature_dim));
  }
  if (c.num_edges() == 0) throw InsufficientDataError(c.meta.name + ": no edges, unusable for pre-training");
  const auto ops = graph::build_operators(c);
  const auto plan = graph::full_plan(ops.adjacency, ops.adjacency_t, encoder_config.num_layers);

  num::Rng init_rng = num::make_rng({config.seed, kInitStream});
  PretrainResult result{encoder::init_weights(encoder_config, init_rng), {}};
  auto& theta = result.weights.theta;
  std::vector<Tensor*> params;
  for (auto& t : theta) params.push_back(&t);
  num::AdamState adam({config.learning_rate}, params);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto samples = sample_link_pairs(c, config, epoch);
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : theta) leaves.push_back(tape.parameter(t));
    Var first = num::spmm(ops.features, leaves[0], ops.features_t);
    const auto layers = encoder::propagate(plan, first, leaves, encoder_config.final_relu);
    const auto live = live_samples(layers.back().value(), samples);
    if (live.empty()) throw DegenerateInputError("pretrain epoch " + std::to_string(epoch + 1) +
                                                 ": every sampled node has a zero embedding");
    Var loss = pretrain_loss(layers.back(), live, config.tau, config.include_positive_in_denominator);
    result.epoch_loss.push_back(loss.value().item());
    tape.backward(loss);
    std::vector<Tensor> grads;
    for (Var v : leaves) grads.push_back(tape.grad(v));
    num::adam_step(params, grads, adam);
  }
  result.weights.frozen = true;
  return result;
}

void write_log(const std::vector<double>& epoch_loss, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,loss\n";
  char buf[32];
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", epoch_loss[e]);
    out << e + 1 << ',' << buf << '\n';
  }
}

}  // namespace gcot::pretrain
