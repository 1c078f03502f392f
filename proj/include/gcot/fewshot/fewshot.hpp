#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gcot/cot/cot.hpp"
#include "gcot/graphdata/dataset.hpp"

namespace gcot::fewshot {

using graph::TaskKind;
using num::Tensor;

/// Instances are global node ids for node tasks and graph ids for graph
/// tasks.
struct FewShotTask {
  TaskKind kind = TaskKind::node;
  std::size_t shots = 0;
  std::vector<std::vector<std::size_t>> support;  // per class, `shots` each
  std::vector<std::size_t> query;                  // ascending
  std::vector<int> query_labels;
  std::size_t query_available = 0;  // before subsampling

  std::size_t num_classes() const { return support.size(); }
  friend bool operator==(const FewShotTask&, const FewShotTask&) = default;
};

/// m support instances per class; every other labelled instance is a query,
/// subsampled to at most max_query when given. Throws
/// InsufficientDataError when a class has fewer than m + 1 instances.
FewShotTask sample_task(const graph::GraphCollection& c, TaskKind kind, std::size_t shots, num::Rng& rng,
                        std::optional<std::size_t> max_query = std::nullopt);

/// Row c is the mean of the embeddings of class c's support rows.
/// `groups[c]` lists row indices into `embeddings`.
Tensor compute_prototypes(const Tensor& embeddings, const std::vector<std::vector<std::size_t>>& groups);

/// Σ_x -ln softmax_c(cos(h_x, proto_c)/τ)[y_x].
num::Var downstream_loss(num::Var embeddings, const std::vector<std::size_t>& labels, num::Var prototypes,
                         double tau);

struct TuneConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
  double tau = 0.5;

  void validate() const;
};

struct Variant {
  enum class Kind { full, no_cot, layer_only };
  Kind kind = Kind::full;
  std::size_t layer = 0;  // 1-based, layer_only only

  std::string name() const;
  /// "full", "no_cot" or "layer_only_<l>".
  static Variant parse(const std::string& name);
  friend bool operator==(const Variant&, const Variant&) = default;
};

/// Initial prompt state and trainable set for a variant. no_cot forces
/// K = 1; layer_only pins the fusion weights to e_l.
struct VariantSetup {
  cot::PromptState state;
  cot::Trainable trainable;
};
VariantSetup setup_variant(const Variant& v, const cot::CotConfig& config, const encoder::EncoderConfig& enc,
                           num::Rng& rng);

struct TuneResult {
  cot::PromptState state;
  std::vector<double> epoch_loss;
};

/// Adam on the trainable prompt parameters; the encoder is never touched.
TuneResult tune(const FewShotTask& task, const cot::CotModel& model, cot::PromptState state,
                cot::Trainable trainable, const TuneConfig& config);

/// Answer embeddings of every instance of the task's kind: node rows, or
/// per-graph sums of node rows.
Tensor instance_embeddings(const cot::CotModel& model, const cot::PromptState& state, TaskKind kind);

/// Index of the most similar prototype; ties go to the smaller index.
std::size_t predict(std::span<const double> embedding, const Tensor& prototypes);

double evaluate(const FewShotTask& task, const cot::CotModel& model, const cot::PromptState& state);

struct BenchConfig {
  std::size_t shots = 1;
  std::size_t num_tasks = 100;
  std::size_t num_seeds = 5;
  std::uint64_t base_seed = 0;
  Variant variant;
  cot::CotConfig cot;
  TuneConfig tune;
  std::optional<std::size_t> max_query = 1000;
  std::size_t jobs = 1;
  /// Called with (task_index, repeat_index, tuned state) after each run,
  /// possibly from several worker threads at once.
  std::function<void(std::size_t, std::size_t, const cot::PromptState&)> on_tuned;
};

struct RunRecord {
  std::size_t task_index;
  std::size_t repeat_index;
  double accuracy;
};

struct ResultsRecord {
  std::string dataset;
  TaskKind kind = TaskKind::node;
  std::size_t shots = 0;
  std::size_t steps = 0;
  std::size_t cond_hidden = 0;
  std::string variant;
  std::uint64_t base_seed = 0;
  std::vector<RunRecord> runs;  // sorted by (task_index, repeat_index)
  double mean = 0.0;
  double std = 0.0;  // population

  void recompute();
};

/// Seeds are pure functions of (base_seed, task_index[, repeat_index]).
num::Rng task_rng(std::uint64_t base_seed, std::size_t task_index);
num::Rng run_rng(std::uint64_t base_seed, std::size_t task_index, std::size_t repeat_index);

/// num_tasks × num_seeds tune+evaluate runs on `jobs` worker threads.
ResultsRecord run_benchmark(const graph::GraphCollection& c, const cot::CotModel& model, TaskKind kind,
                            const BenchConfig& config);

/// full, no_cot and layer_only(1..L), in that order.
std::vector<ResultsRecord> run_ablation(const graph::GraphCollection& c, const cot::CotModel& model, TaskKind kind,
                                        const BenchConfig& config);

/// Columns dataset,task,shots,K,s,variant,base_seed,task_index,repeat_index,accuracy.
void write_results_csv(const std::vector<ResultsRecord>& records, const std::filesystem::path& path);
std::string results_csv_header();

}  // namespace gcot::fewshot
