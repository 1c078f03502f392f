#include "gcot/fewshot/fewshot.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "gcot/error.hpp"
#include "gcot/numcore/adam.hpp"
#include "gcot/numcore/kernels.hpp"

namespace gcot::fewshot {

using num::Tape;
using num::Var;

namespace {

constexpr std::uint64_t kTaskStream = 0x7461736b;      // "task"
constexpr std::uint64_t kRunStream = 0x72756e;         // "run"

std::vector<int> instance_labels(const graph::GraphCollection& c, TaskKind kind) {
  std::vector<int> labels;
  for (const auto& g : c.graphs) {
    if (kind == TaskKind::graph) {
      labels.push_back(g.graph_label.value_or(-1));
    } else if (g.node_labels.empty()) {
      labels.insert(labels.end(), g.num_nodes(), -1);
    } else {
      labels.insert(labels.end(), g.node_labels.begin(), g.node_labels.end());
    }
  }
  return labels;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Tracked embeddings of `instances` (in the given order) and the plan that
// produces them.
struct SupportEmbedder {
  cot::ForwardPlan plan;
  std::vector<std::size_t> positions;        // instance -> row after readout
  std::vector<std::size_t> segment_offsets;  // graph tasks only

  SupportEmbedder(const cot::CotModel& model, const cot::CotConfig& config, TaskKind kind,
                  const std::vector<std::size_t>& instances) {
    std::vector<std::size_t> sorted = instances;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<std::size_t> targets;
    if (kind == TaskKind::node) {
      targets = sorted;
    } else {
      const auto& off = model.graph().node_offsets;
      segment_offsets.push_back(0);
      for (std::size_t g : sorted) {
        for (std::size_t i = off.at(g); i < off.at(g + 1); ++i) targets.push_back(i);
        segment_offsets.push_back(targets.size());
      }
    }
    plan = model.prepare(targets, config);
    if (kind == TaskKind::node) {
      positions = graph::positions_in(plan.targets, instances);
      return;
    }
    positions = graph::positions_in(sorted, instances);
    if (plan.full) {
      // Whole-graph plan: every graph's rows are present; segment all.
      const auto& off = model.graph().node_offsets;
      segment_offsets = off;
      positions = instances;
    }
  }

  Var embed(Var answer, TaskKind kind) const {
    if (kind == TaskKind::graph) answer = num::segment_sum(answer, segment_offsets);
    return num::gather_rows(answer, positions);
  }
};

bool all_zero(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

bool zero_row(const Tensor& t, std::size_t r) { return all_zero(t.row(r)); }

// A relu encoder can map an instance to the zero vector, where cosine is
// undefined. Such rows, and prototypes that are zero, drop out of the
// loss; classes are renumbered over the surviving prototypes.
struct LiveTerms {
  std::vector<std::size_t> rows, labels, classes;
};

LiveTerms live_terms(const Tensor& emb, const Tensor& protos, const std::vector<std::size_t>& labels) {
  LiveTerms out;
  std::vector<std::size_t> renumber(protos.rows(), protos.rows());
  for (std::size_t c = 0; c < protos.rows(); ++c) {
    if (zero_row(protos, c)) continue;
    renumber[c] = out.classes.size();
    out.classes.push_back(c);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (zero_row(emb, i) || renumber[labels[i]] == protos.rows()) continue;
    out.rows.push_back(i);
    out.labels.push_back(renumber[labels[i]]);
  }
  return out;
}

}  // namespace

FewShotTask sample_task(const graph::GraphCollection& c, TaskKind kind, std::size_t shots, num::Rng& rng,
                        std::optional<std::size_t> max_query) {
  if (shots < 1) throw ConfigError("shots must be >= 1");
  const int classes = kind == TaskKind::node ? c.meta.node_classes : c.meta.graph_classes;
  if (classes < 1) {
    throw InsufficientDataError(c.meta.name + " has no " + graph::task_name(kind) + " labels");
  }
  const auto labels = instance_labels(c, kind);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  FewShotTask task;
  task.kind = kind;
  task.shots = shots;
  std::vector<char> in_support(labels.size(), 0);
  for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
    auto& pool = by_class[cls];
    if (pool.size() < shots + 1) {
      throw InsufficientDataError(c.meta.name + ": class " + std::to_string(cls) + " has " +
                                  std::to_string(pool.size()) + " instances, " + std::to_string(shots) +
                                  "-shot needs " + std::to_string(shots + 1));
    }
    num::shuffle(pool.begin(), pool.end(), rng);
    task.support.emplace_back(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shots));
    for (std::size_t i : task.support.back()) in_support[i] = 1;
  }
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0 && !in_support[i]) task.query.push_back(i);
  task.query_available = task.query.size();
  if (max_query && task.query.size() > *max_query) {
    num::shuffle(task.query.begin(), task.query.end(), rng);
    task.query.resize(*max_query);
    std::sort(task.query.begin(), task.query.end());
  }
  for (std::size_t i : task.query) task.query_labels.push_back(labels[i]);
  return task;
}

Tensor compute_prototypes(const Tensor& embeddings, const std::vector<std::vector<std::size_t>>& groups) {
  Tape tape;
  return num::group_mean(tape.constant(embeddings), groups).value();
}

Var downstream_loss(Var embeddings, const std::vector<std::size_t>& labels, Var prototypes, double tau) {
  if (!(tau > 0.0)) throw ConfigError("downstream tau must be > 0");
  Var logits = num::scale(num::cosine_matrix(embeddings, prototypes), 1.0 / tau);
  return num::sub(num::sum(num::row_logsumexp(logits)), num::sum(num::pick(logits, labels)));
}

void TuneConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("downstream tau must be > 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("tune learning rate must be >= 0");
}

std::string Variant::name() const {
  switch (kind) {
    case Kind::full: return "full";
    case Kind::no_cot: return "no_cot";
    case Kind::layer_only: return "layer_only_" + std::to_string(layer);
  }
  return "unknown";
}

Variant Variant::parse(const std::string& name) {
  if (name == "full") return {Kind::full, 0};
  if (name == "no_cot") return {Kind::no_cot, 0};
  const std::string prefix = "layer_only_";
  if (name.rfind(prefix, 0) == 0 && name.size() > prefix.size()) {
    const std::string digits = name.substr(prefix.size());
    if (std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      const auto l = std::stoul(digits);
      if (l >= 1) return {Kind::layer_only, l};
    }
  }
  throw ConfigError("unknown variant \"" + name + "\" (full, no_cot, layer_only_<l>)");
}

VariantSetup setup_variant(const Variant& v, const cot::CotConfig& config, const encoder::EncoderConfig& enc,
                           num::Rng& rng) {
  VariantSetup out{cot::init_state(config, enc, rng), {}};
  switch (v.kind) {
    case Variant::Kind::full: break;
    case Variant::Kind::no_cot: out.state.config.steps = 1; break;
    case Variant::Kind::layer_only:
      if (v.layer < 1 || v.layer > enc.num_layers) {
        throw ConfigError("layer_only(" + std::to_string(v.layer) + ") needs 1 <= l <= " +
                          std::to_string(enc.num_layers));
      }
      out.state.fusion = Tensor(1, enc.num_layers, 0.0);
      out.state.fusion(0, v.layer - 1) = 1.0;
      out.trainable.fusion = false;
      break;
  }
  return out;
}

TuneResult tune(const FewShotTask& task, const cot::CotModel& model, cot::PromptState state, cot::Trainable trainable,
                const TuneConfig& config) {
  config.validate();
  std::vector<std::size_t> instances, labels;
  std::vector<std::vector<std::size_t>> groups(task.num_classes());
  for (std::size_t cls = 0; cls < task.num_classes(); ++cls) {
    for (std::size_t i : task.support[cls]) {
      groups[cls].push_back(instances.size());
      instances.push_back(i);
      labels.push_back(cls);
    }
  }
  const SupportEmbedder embedder(model, state.config, task.kind, instances);

  TuneResult result{std::move(state), {}};
  num::AdamState adam;
  adam.hyper.learning_rate = config.learning_rate;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Tape tape;
    const cot::PromptVars vars = cot::bind(tape, result.state, trainable);
    const auto trace = model.forward(tape, vars, result.state, embedder.plan);
    Var emb = embedder.embed(trace.answer, task.kind);
    // Prototypes depend on the prompts, so they are rebuilt every epoch.
    Var protos = num::group_mean(emb, groups);
    const auto terms = live_terms(emb.value(), protos.value(), labels);
    if (terms.rows.empty()) break;  // nothing left that a gradient could reach
    Var loss = terms.rows.size() == labels.size() && terms.classes.size() == groups.size()
                   ? downstream_loss(emb, labels, protos, config.tau)
                   : downstream_loss(num::gather_rows(emb, terms.rows), terms.labels,
                                     num::gather_rows(protos, terms.classes), config.tau);
    result.epoch_loss.push_back(loss.value().item());
    tape.backward(loss);
    const auto pairs = cot::trainable_pairs(result.state, vars, trainable);
    std::vector<Tensor*> params;
    std::vector<Tensor> grads;
    for (const auto& [tensor, var] : pairs) {
      params.push_back(tensor);
      grads.push_back(tape.grad(var));
    }
    if (epoch == 0) adam = num::AdamState(adam.hyper, params);
    num::adam_step(params, grads, adam);
  }
  return result;
}

Tensor instance_embeddings(const cot::CotModel& model, const cot::PromptState& state, TaskKind kind) {
  Tensor answer = model.run(state).answer;
  if (kind == TaskKind::node) return answer;
  Tape tape;
  return num::segment_sum(tape.constant(std::move(answer)), model.graph().node_offsets).value();
}

std::size_t predict(std::span<const double> embedding, const Tensor& prototypes) {
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t c = 0; c < prototypes.rows(); ++c) {
    // A zero vector on either side scores 0, like an orthogonal pair.
    const double sim = all_zero(embedding) || all_zero(prototypes.row(c))
                           ? 0.0
                           : num::cosine(embedding, prototypes.row(c));
    if (sim > best_sim) {
      best_sim = sim;
      best = c;
    }
  }
  return best;
}

double evaluate(const FewShotTask& task, const cot::CotModel& model, const cot::PromptState& state) {
  if (task.query.empty()) throw InsufficientDataError("evaluate: empty query set");
  const Tensor emb = instance_embeddings(model, state, task.kind);
  std::vector<std::vector<std::size_t>> groups = task.support;
  const Tensor protos = compute_prototypes(emb, groups);
  std::size_t correct = 0;
  for (std::size_t q = 0; q < task.query.size(); ++q) {
    if (predict(emb.row(task.query[q]), protos) == static_cast<std::size_t>(task.query_labels[q])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(task.query.size());
}

void ResultsRecord::recompute() {
  if (runs.empty()) {
    mean = std = 0.0;
    return;
  }
  double total = 0.0;
  for (const auto& r : runs) total += r.accuracy;
  mean = total / static_cast<double>(runs.size());
  double sq = 0.0;
  for (const auto& r : runs) sq += (r.accuracy - mean) * (r.accuracy - mean);
  std = std::sqrt(sq / static_cast<double>(runs.size()));
}

num::Rng task_rng(std::uint64_t base_seed, std::size_t task_index) {
  return num::make_rng({base_seed, kTaskStream, task_index});
}

num::Rng run_rng(std::uint64_t base_seed, std::size_t task_index, std::size_t repeat_index) {
  return num::make_rng({base_seed, kRunStream, task_index, repeat_index});
}

ResultsRecord run_benchmark(const graph::GraphCollection& c, const cot::CotModel& model, TaskKind kind,
                            const BenchConfig& config) {
  config.cot.validate();
  config.tune.validate();
  if (config.num_tasks < 1 || config.num_seeds < 1) throw ConfigError("num_tasks and num_seeds must be >= 1");
  const encoder::EncoderConfig enc = model.weights().config();

  std::vector<FewShotTask> tasks;
  for (std::size_t t = 0; t < config.num_tasks; ++t) {
    num::Rng rng = task_rng(config.base_seed, t);
    tasks.push_back(sample_task(c, kind, config.shots, rng, config.max_query));
  }

  ResultsRecord rec;
  rec.dataset = c.meta.name;
  rec.kind = kind;
  rec.shots = config.shots;
  rec.cond_hidden = config.cot.cond_hidden;
  rec.variant = config.variant.name();
  rec.base_seed = config.base_seed;
  const std::size_t total = config.num_tasks * config.num_seeds;
  rec.runs.resize(total);
  {
    num::Rng probe = run_rng(config.base_seed, 0, 0);
    rec.steps = setup_variant(config.variant, config.cot, enc, probe).state.config.steps;
  }

  auto run_one = [&](std::size_t idx) {
    const std::size_t t = idx / config.num_seeds, r = idx % config.num_seeds;
    num::Rng rng = run_rng(config.base_seed, t, r);
    auto setup = setup_variant(config.variant, config.cot, enc, rng);
    auto tuned = tune(tasks[t], model, std::move(setup.state), setup.trainable, config.tune);
    rec.runs[idx] = {t, r, evaluate(tasks[t], model, tuned.state)};
    if (config.on_tuned) config.on_tuned(t, r, tuned.state);
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(config.jobs, total));
  if (jobs == 1) {
    for (std::size_t i = 0; i < total; ++i) run_one(i);
  } else {
    // Workers own whole runs; the kernels stay single-threaded meanwhile.
    num::kernels::ThreadScope serial(1);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < total; i = next++) {
          try {
            run_one(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = total;
          }
        }
      });
    }
    workers.clear();
    if (failure) std::rethrow_exception(failure);
  }
  rec.recompute();
  return rec;
}

std::vector<ResultsRecord> run_ablation(const graph::GraphCollection& c, const cot::CotModel& model, TaskKind kind,
                                        const BenchConfig& config) {
  std::vector<Variant> variants{{Variant::Kind::full, 0}, {Variant::Kind::no_cot, 0}};
  for (std::size_t l = 1; l <= model.num_layers(); ++l) variants.push_back({Variant::Kind::layer_only, l});
  std::vector<ResultsRecord> out;
  for (const auto& v : variants) {
    BenchConfig bc = config;
    bc.variant = v;
    out.push_back(run_benchmark(c, model, kind, bc));
  }
  return out;
}

std::string results_csv_header() {
  return "dataset,task,shots,K,s,variant,base_seed,task_index,repeat_index,accuracy";
}

void write_results_csv(const std::vector<ResultsRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << results_csv_header() << '\n';
  for (const auto& rec : records) {
    for (const auto& run : rec.runs) {
      out << rec.dataset << ',' << graph::task_name(rec.kind) << ',' << rec.shots << ',' << rec.steps << ','
          << rec.cond_hidden << ',' << rec.variant << ',' << rec.base_seed << ',' << run.task_index << ','
          << run.repeat_index << ',' << format_double(run.accuracy) << '\n';
    }
  }
}

}  // namespace gcot::fewshot
