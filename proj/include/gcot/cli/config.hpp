#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "gcot/cot/prompt.hpp"
#include "gcot/encoder/encoder.hpp"
#include "gcot/fewshot/fewshot.hpp"
#include "gcot/graphdata/dataset.hpp"
#include "gcot/pretrain/pretrain.hpp"

namespace gcot::cli {

using nlohmann::json;

/// Every setting of a run. Resolution layers, lowest first: built-in
/// defaults (some depend on the task kind), GCOT_OUT_DIR, the JSON config
/// file, command-line flags.
struct RunConfig {
  std::string dataset_path;
  graph::TaskKind task = graph::TaskKind::node;  // default: the dataset's own
  std::size_t shots = 1;
  std::size_t steps = 2;         // node 2, graph 3
  std::size_t cond_hidden = 32;  // node 32, graph 8
  cot::StdPromptKind prompt_kind = cot::StdPromptKind::gpf_plus;
  std::size_t num_prompts = 5;
  bool chain_features = false;
  double tau_pretrain = 1.0;
  double tau_downstream = 0.5;
  std::size_t num_layers = 3;
  std::size_t hidden_dim = 256;
  bool final_relu = false;  // JSON encoder.final_activation: "linear" | "relu"
  std::size_t pretrain_epochs = 200;
  double pretrain_lr = 1e-4;
  std::size_t negatives = 5;
  std::optional<std::size_t> anchors_per_epoch;
  bool include_positive_in_denominator = false;
  std::size_t tune_epochs = 100;
  double tune_lr = 1e-2;
  std::size_t num_tasks = 100;
  std::size_t num_seeds = 5;
  std::uint64_t base_seed = 0;
  std::optional<std::size_t> max_query = 1000;
  std::string variant = "full";
  std::size_t jobs = 1;
  std::string out_dir = "out";
  std::string checkpoint;  // default: <out_dir>/encoder.ckpt

  cot::CotConfig cot_config() const;
  encoder::EncoderConfig encoder_config(std::size_t input_dim) const;
  pretrain::PretrainConfig pretrain_config() const;
  fewshot::TuneConfig tune_config() const;
  fewshot::BenchConfig bench_config() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// The nested JSON layout used by config files and --print-config.
json to_json(const RunConfig& c);

/// Defaults for a task kind, as a complete JSON document. out_dir comes
/// from `env_out_dir` when given.
json default_json(graph::TaskKind task, const std::optional<std::string>& env_out_dir);

/// Merges `layer` into `base`: objects recursively, everything else by
/// replacement. Throws ConfigError for keys absent from `base`.
void merge_layer(json& base, const json& layer, const std::string& where);

/// Strict conversion of a complete document. Throws ConfigError on a
/// missing key, wrong type or out-of-range value.
RunConfig from_json(const json& doc);

/// file ⊕ flags over the task's defaults. `dataset_task` supplies the task
/// when neither layer names one.
RunConfig resolve(const json& file_layer, const json& flag_layer, std::optional<graph::TaskKind> dataset_task,
                  const std::optional<std::string>& env_out_dir);

json read_config_file(const std::filesystem::path& path);

}  // namespace gcot::cli
