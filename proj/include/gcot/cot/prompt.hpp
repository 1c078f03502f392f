#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "gcot/encoder/encoder.hpp"
#include "gcot/numcore/random.hpp"

namespace gcot::cot {

using num::Tensor;

/// How the answer embeddings are prompted after the last step.
///   gpf_plus     attention over N bias prompts, multiplied into H_K
///   gpf          one vector added to the input features before step 1
///   graphprompt  one vector multiplied into every row of H_K
enum class StdPromptKind { gpf_plus, gpf, graphprompt };

const char* kind_name(StdPromptKind kind);
StdPromptKind parse_kind(const std::string& name);

struct CotConfig {
  std::size_t steps = 2;        // K
  std::size_t cond_hidden = 32;  // s
  StdPromptKind kind = StdPromptKind::gpf_plus;
  std::size_t num_prompts = 5;  // N, gpf_plus only
  /// Multiply each step's prompts into the previous step's features
  /// instead of the original ones.
  bool chain_features = false;

  void validate() const;
  friend bool operator==(const CotConfig&, const CotConfig&) = default;
};

/// Every tuned parameter. One set is shared by all K steps.
struct PromptState {
  CotConfig config;
  Tensor fusion;  // 1×L
  Tensor w1;      // h×s
  Tensor b1;      // 1×s
  Tensor w2;      // s×d
  Tensor b2;      // 1×d
  /// gpf_plus: N×h bias prompts. gpf: 1×d feature vector.
  /// graphprompt: 1×h embedding vector.
  Tensor prompts;
  Tensor projections;  // gpf_plus: N×h; empty otherwise

  std::size_t num_layers() const { return fusion.cols(); }
  std::size_t hidden_dim() const { return w1.rows(); }
  std::size_t input_dim() const { return w2.cols(); }

  friend bool operator==(const PromptState&, const PromptState&) = default;
};

/// Fusion weights 1/L; condition-net W1 Glorot, b1 = 0, W2 = 0, b2 = 1 so
/// that every generated prompt starts as all-ones. gpf_plus bias prompts
/// are 1 + N(0, 0.01²) and projections N(0, 0.01²); the gpf vector starts
/// at 0 and the graphprompt vector at 1. The standard prompt is drawn
/// before the condition-net, so states for different K share values.
PromptState init_state(const CotConfig& config, const encoder::EncoderConfig& encoder, num::Rng& rng);

/// Header "GCOT-PROMPT v1", then "K L h s d kind N", then parameter rows
/// in the order fusion, W1, b1, W2, b2, prompts, projections.
void save_prompt_state(const PromptState& state, const std::filesystem::path& path);
PromptState load_prompt_state(const std::filesystem::path& path);

}  // namespace gcot::cot
