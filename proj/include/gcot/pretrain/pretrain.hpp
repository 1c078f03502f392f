#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "gcot/encoder/encoder.hpp"
#include "gcot/graphdata/adjacency.hpp"
#include "gcot/graphdata/dataset.hpp"

namespace gcot::pretrain {

struct PretrainConfig {
  std::size_t epochs = 200;
  double learning_rate = 1e-4;
  double tau = 1.0;
  std::size_t negatives = 5;
  /// Anchors drawn per epoch; nullopt uses every eligible node once.
  std::optional<std::size_t> anchors_per_epoch;
  bool include_positive_in_denominator = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Anchor, one neighbour and `negatives.size()` non-neighbours from the
/// anchor's own graph. Node ids are global.
struct LinkSample {
  std::size_t anchor;
  std::size_t positive;
  std::vector<std::size_t> negatives;

  friend bool operator==(const LinkSample&, const LinkSample&) = default;
};

/// Samples for one epoch, a pure function of (config.seed, epoch).
/// Anchors without neighbours or with fewer than k non-neighbours are
/// skipped. Throws InsufficientDataError when the collection has no edge.
std::vector<LinkSample> sample_link_pairs(const graph::GraphCollection& c, const PretrainConfig& config,
                                          std::size_t epoch);

/// -Σ_o [ sim(o,a)/τ - ln Σ_b exp(sim(o,b)/τ) ] over samples, sim = cosine
/// of rows of `embeddings`. With include_positive the positive joins the
/// denominator.
num::Var pretrain_loss(num::Var embeddings, const std::vector<LinkSample>& samples, double tau,
                       bool include_positive = false);

struct PretrainResult {
  encoder::EncoderWeights weights;  // frozen
  std::vector<double> epoch_loss;   // loss before each epoch's update
};

PretrainResult pretrain_run(const graph::GraphCollection& c, const encoder::EncoderConfig& encoder_config,
                            const PretrainConfig& config);

/// "epoch,loss" CSV, epochs numbered from 1.
void write_log(const std::vector<double>& epoch_loss, const std::filesystem::path& path);

}  // namespace gcot::pretrain
