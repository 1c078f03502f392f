#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "gcot/graphdata/propagation.hpp"
#include "gcot/numcore/ops.hpp"
#include "gcot/numcore/random.hpp"

namespace gcot::encoder {

using num::Tensor;
using num::Var;

struct EncoderConfig {
  std::size_t num_layers = 3;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 256;
  /// relu on the output layer too. Off by default: under the contrastive
  /// objective a rectified last layer collapses to a few live units.
  bool final_relu = false;

  /// Throws ConfigError unless every field is >= 1.
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// GCN layer weights: theta[0] is d×h, the rest h×h.
struct EncoderWeights {
  std::vector<Tensor> theta;
  bool frozen = false;
  /// Not stored in checkpoints; the run configuration supplies it.
  bool final_relu = false;

  EncoderConfig config() const;
  std::size_t num_layers() const { return theta.size(); }
  std::size_t hidden_dim() const { return theta.front().cols(); }
  std::size_t input_dim() const { return theta.front().rows(); }

  friend bool operator==(const EncoderWeights&, const EncoderWeights&) = default;
};

/// Glorot-uniform weights, unfrozen.
EncoderWeights init_weights(const EncoderConfig& config, num::Rng& rng);

/// H^l = relu(Â H^(l-1) θ^l) with H^0 = x; returns H^1..H^L. H^L skips the
/// relu unless w.final_relu.
std::vector<Tensor> encode(const Tensor& x, const Tensor& adjacency, const EncoderWeights& w);

/// Tracked propagation along a plan. `first_projection` holds x·θ¹ for the
/// plan's input rows; `theta` are the layer weights on the same tape.
/// Layer 1 is relu(block_1 · first_projection); later layers aggregate
/// first, relu((block_l · H^(l-1)) θ^l), so only rows[l] are multiplied
/// by θ^l. The last layer is rectified only with `final_relu`. Returns H^l
/// restricted to plan.rows[l].
std::vector<Var> propagate(const graph::PropagationPlan& plan, Var first_projection, std::span<const Var> theta,
                           bool final_relu);

/// Untracked full-graph forward from a sparse feature matrix, sharing the
/// summation order of propagate().
std::vector<Tensor> encode_sparse(const num::SparseMatrix& features, const num::SparseMatrix& adjacency,
                                  const EncoderWeights& w);

/// FNV-1a over the raw bytes of every weight (shape included).
std::uint64_t digest(const EncoderWeights& w);

/// Text checkpoint: "GCOT-CKPT v1", then "L d h", then one line of 17
/// significant digit decimals per weight row, layers in order.
void save_checkpoint(const EncoderWeights& w, const std::filesystem::path& path);
/// Loaded weights are frozen. FormatError on a bad magic line or version,
/// CorruptionError when the payload disagrees with the header.
EncoderWeights load_checkpoint(const std::filesystem::path& path);

}  // namespace gcot::encoder
