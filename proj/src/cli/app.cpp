#include "gcot/cli/app.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "gcot/error.hpp"
#include "gcot/graphdata/adjacency.hpp"

namespace gcot::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_json(const json& doc, const fs::path& path) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_resolved(const RunConfig& config, const std::string& command, json extra = nullptr) {
  json doc = to_json(config);
  if (!extra.is_null()) doc[command] = std::move(extra);
  write_json(doc, fs::path(config.out_dir) / (command + ".config.json"));
}

graph::GraphCollection load_checked(const RunConfig& config) {
  auto c = graph::load_dataset(config.dataset_path);
  if (config.task == graph::TaskKind::node && c.meta.node_classes == 0) {
    throw DataError(config.dataset_path + " has no node labels for a node task");
  }
  if (config.task == graph::TaskKind::graph && c.meta.graph_classes == 0) {
    throw DataError(config.dataset_path + " has no graph labels for a graph task");
  }
  return c;
}

encoder::EncoderWeights load_encoder(const RunConfig& config, const graph::GraphCollection& c) {
  auto w = encoder::load_checkpoint(config.checkpoint);
  const auto have = w.config();
  const auto want = config.encoder_config(c.meta.feature_dim);
  if (have.num_layers != want.num_layers || have.input_dim != want.input_dim || have.hidden_dim != want.hidden_dim) {
    throw DimensionError("checkpoint " + config.checkpoint + " has L=" + std::to_string(have.num_layers) +
                         " d=" + std::to_string(have.input_dim) + " h=" + std::to_string(have.hidden_dim) +
                         ", the run expects L=" + std::to_string(want.num_layers) +
                         " d=" + std::to_string(want.input_dim) + " h=" + std::to_string(want.hidden_dim));
  }
  w.final_relu = want.final_relu;
  return w;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json summary_json(const fewshot::ResultsRecord& rec) {
  return json{{"dataset", rec.dataset},   {"task", graph::task_name(rec.kind)},
              {"shots", rec.shots},       {"K", rec.steps},
              {"s", rec.cond_hidden},     {"variant", rec.variant},
              {"base_seed", rec.base_seed}, {"runs", rec.runs.size()},
              {"mean", rec.mean},         {"std", rec.std}};
}

void report(std::ostream& out, const fewshot::ResultsRecord& rec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "mean %.2f%% std %.2f", 100.0 * rec.mean, 100.0 * rec.std);
  out << rec.dataset << ' ' << rec.variant << " shots=" << rec.shots << " K=" << rec.steps
      << " s=" << rec.cond_hidden << ": " << buf << " over " << rec.runs.size() << " runs\n";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Median wall time of one untracked forward pass over the whole graph.
double forward_seconds(const cot::CotModel& model, const cot::PromptState& state) {
  std::vector<double> times;
  for (int i = 0; i < 5; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    auto outp = model.run(state);
    times.push_back(seconds_since(t0));
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

void write_embedding_rows(std::ostream& out, const num::Tensor& t, const std::vector<int>& labels,
                          std::optional<std::size_t> step) {
  out << (step ? "step," : "") << "node_id" << (step ? "" : ",label");
  for (std::size_t j = 0; j < t.cols(); ++j) out << ",h" << j;
  out << '\n';
  for (std::size_t i = 0; i < t.rows(); ++i) {
    if (step) out << *step << ',';
    out << i;
    if (!step) out << ',' << labels[i];
    for (double v : t.row(i)) out << ',' << fmt(v);
    out << '\n';
  }
}

}  // namespace

SweepAxis parse_axis(const std::string& name) {
  if (name == "steps") return SweepAxis::steps;
  if (name == "cond_hidden") return SweepAxis::cond_hidden;
  if (name == "shots") return SweepAxis::shots;
  throw ConfigError("unknown sweep axis \"" + name + "\" (steps, cond_hidden, shots)");
}

const char* axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::steps: return "steps";
    case SweepAxis::cond_hidden: return "cond_hidden";
    case SweepAxis::shots: return "shots";
  }
  return "?";
}

void cmd_pretrain(const RunConfig& config, std::ostream& out) {
  const auto c = graph::load_dataset(config.dataset_path);
  ensure_dir(config.out_dir);
  write_resolved(config, "pretrain");
  auto result = pretrain::pretrain_run(c, config.encoder_config(c.meta.feature_dim), config.pretrain_config());
  if (fs::path(config.checkpoint).has_parent_path()) ensure_dir(fs::path(config.checkpoint).parent_path());
  encoder::save_checkpoint(result.weights, config.checkpoint);
  pretrain::write_log(result.epoch_loss, fs::path(config.out_dir) / "pretrain_log.csv");
  out << "pretrain " << c.meta.name << ": " << result.epoch_loss.size() << " epochs, loss "
      << fmt(result.epoch_loss.front()) << " -> " << fmt(result.epoch_loss.back()) << ", encoder "
      << hex(encoder::digest(result.weights)) << " -> " << config.checkpoint << '\n';
}

void cmd_bench(const RunConfig& config, bool save_prompts, std::ostream& out) {
  const auto c = load_checked(config);
  const auto weights = load_encoder(config, c);
  ensure_dir(config.out_dir);
  write_resolved(config, "bench", json{{"save_prompts", save_prompts}});
  const cot::CotModel model(graph::build_operators(c), weights);
  auto bc = config.bench_config();
  const fs::path prompt_dir = fs::path(config.out_dir) / "prompts";
  if (save_prompts) {
    ensure_dir(prompt_dir);
    bc.on_tuned = [&](std::size_t t, std::size_t r, const cot::PromptState& s) {
      cot::save_prompt_state(s, prompt_dir / ("task" + std::to_string(t) + "_repeat" + std::to_string(r) + ".txt"));
    };
  }
  const auto rec = fewshot::run_benchmark(c, model, config.task, bc);
  fewshot::write_results_csv({rec}, fs::path(config.out_dir) / "results.csv");
  json summary = summary_json(rec);
  summary["encoder_digest"] = hex(encoder::digest(model.weights()));
  summary["config"] = to_json(config);
  write_json(summary, fs::path(config.out_dir) / "summary.json");
  report(out, rec);
}

void cmd_ablate(const RunConfig& config, std::ostream& out) {
  const auto c = load_checked(config);
  const auto weights = load_encoder(config, c);
  ensure_dir(config.out_dir);
  write_resolved(config, "ablate");
  const cot::CotModel model(graph::build_operators(c), weights);
  const auto records = fewshot::run_ablation(c, model, config.task, config.bench_config());
  fewshot::write_results_csv(records, fs::path(config.out_dir) / "ablation.csv");
  json variants = json::array();
  for (const auto& rec : records) {
    variants.push_back(summary_json(rec));
    report(out, rec);
  }
  write_json(json{{"variants", variants}, {"config", to_json(config)}},
             fs::path(config.out_dir) / "ablation_summary.json");
}

void cmd_sweep(const RunConfig& config, SweepAxis axis, const std::vector<std::size_t>& values, std::ostream& out) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const auto c = load_checked(config);
  const auto weights = load_encoder(config, c);
  ensure_dir(config.out_dir);
  write_resolved(config, "sweep", json{{"axis", axis_name(axis)}, {"values", values}});
  const cot::CotModel model(graph::build_operators(c), weights);

  auto table = open_out(fs::path(config.out_dir) / "sweep.csv");
  table << "axis,value,dataset,task,shots,K,s,variant,base_seed,runs,mean,std,wall_seconds,forward_seconds\n";
  std::vector<fewshot::ResultsRecord> records;
  for (std::size_t v : values) {
    RunConfig vc = config;
    switch (axis) {
      case SweepAxis::steps: vc.steps = v; break;
      case SweepAxis::cond_hidden: vc.cond_hidden = v; break;
      case SweepAxis::shots: vc.shots = v; break;
    }
    const auto bc = vc.bench_config();
    const auto t0 = std::chrono::steady_clock::now();
    auto rec = fewshot::run_benchmark(c, model, vc.task, bc);
    const double wall = seconds_since(t0);
    num::Rng rng = fewshot::run_rng(bc.base_seed, 0, 0);
    const auto setup = fewshot::setup_variant(bc.variant, bc.cot, weights.config(), rng);
    const double forward = forward_seconds(model, setup.state);
    table << axis_name(axis) << ',' << v << ',' << rec.dataset << ',' << graph::task_name(rec.kind) << ','
          << rec.shots << ',' << rec.steps << ',' << rec.cond_hidden << ',' << rec.variant << ','
          << rec.base_seed << ',' << rec.runs.size() << ',' << fmt(rec.mean) << ',' << fmt(rec.std) << ','
          << fmt(wall) << ',' << fmt(forward) << '\n';
    report(out, rec);
    records.push_back(std::move(rec));
  }
  fewshot::write_results_csv(records, fs::path(config.out_dir) / "sweep_runs.csv");
}

void cmd_export_embeddings(const RunConfig& config, const fs::path& prompts, std::ostream& out) {
  if (prompts.empty()) throw ConfigError("export-embeddings needs --prompts");
  const auto c = graph::load_dataset(config.dataset_path);
  const auto weights = load_encoder(config, c);
  const auto state = cot::load_prompt_state(prompts);
  const cot::CotModel model(graph::build_operators(c), weights);
  ensure_dir(config.out_dir);
  write_resolved(config, "export", json{{"prompts", prompts.string()}});
  const auto result = model.run(state);

  // Node label, or the enclosing graph's label for graph-level datasets.
  std::vector<int> labels;
  for (const auto& g : c.graphs) {
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      labels.push_back(!g.node_labels.empty() ? g.node_labels[i] : g.graph_label.value_or(-1));
    }
  }
  {
    auto f = open_out(fs::path(config.out_dir) / "answer_embeddings.csv");
    write_embedding_rows(f, result.answer, labels, std::nullopt);
  }
  for (std::size_t k = 0; k < result.thoughts.size(); ++k) {
    auto f = open_out(fs::path(config.out_dir) / ("thought_step" + std::to_string(k + 1) + ".csv"));
    write_embedding_rows(f, result.thoughts[k], labels, k + 1);
  }
  out << "export: " << result.answer.rows() << " nodes, " << result.thoughts.size() << " thought file(s) in "
      << config.out_dir << '\n';
}

namespace {

// A flag that, when given, overrides one key of the configuration.
struct Override {
  CLI::Option* option;
  std::vector<std::string> path;
  std::function<json(const CLI::Option&)> value;
};

json count_or_none(const CLI::Option& o) {
  const auto s = o.as<std::string>();
  if (s == "none") return nullptr;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(o.get_name() + " expects a non-negative integer or \"none\", got \"" + s + "\"");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"gcot: chained prompt tuning for few-shot learning on frozen graph encoders", "gcot"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::string config_path;
  bool print_config = false;
  app.add_option("--config", config_path, "JSON config file (flags override its values)");
  app.add_flag("--print-config", print_config, "Print the resolved configuration and exit");

  std::vector<Override> overrides;
  auto text = [](const CLI::Option& o) { return json(o.as<std::string>()); };
  auto count = [](const CLI::Option& o) { return json(o.as<std::size_t>()); };
  auto real = [](const CLI::Option& o) { return json(o.as<double>()); };
  auto flag = [](const CLI::Option& o) { return json(o.as<bool>()); };
  auto add = [&](CLI::App& a, const std::string& name, std::vector<std::string> path, auto convert,
                 const std::string& help, bool is_flag = false) {
    CLI::Option* o = is_flag ? a.add_flag(name, help) : a.add_option(name, help);
    overrides.push_back({o, std::move(path), convert});
  };

  add(app, "--out", {"out_dir"}, text, "Output directory (default: $GCOT_OUT_DIR or ./out)");
  add(app, "--seed", {"base_seed"}, [](const CLI::Option& o) { return json(o.as<std::uint64_t>()); },
      "Base seed for pre-training and task sampling");
  add(app, "--jobs", {"jobs"}, count, "Worker threads for bench runs");
  add(app, "--dataset", {"dataset_path"}, text, "Canonical dataset directory");
  add(app, "--task", {"task"}, text, "node or graph (default: the dataset's task)");
  add(app, "--checkpoint", {"checkpoint"}, text, "Encoder checkpoint (default: <out>/encoder.ckpt)");
  add(app, "--num-layers", {"encoder", "num_layers"}, count, "Encoder layers L");
  add(app, "--hidden-dim", {"encoder", "hidden_dim"}, count, "Encoder width h");
  add(app, "--final-activation", {"encoder", "final_activation"}, text, "Output layer activation: linear or relu");

  auto* pre = app.add_subcommand("pretrain", "Pre-train the encoder by link prediction");
  auto* bench = app.add_subcommand("bench", "Tune and evaluate prompts on few-shot tasks");
  auto* ablate = app.add_subcommand("ablate", "bench for full, no_cot and every layer_only variant");
  auto* sweep = app.add_subcommand("sweep", "bench over values of one setting");
  auto* exp = app.add_subcommand("export-embeddings", "Write answer and thought embeddings of a tuned prompt");

  add(*pre, "--epochs", {"pretrain", "epochs"}, count, "Pre-training epochs");
  add(*pre, "--lr", {"pretrain", "lr"}, real, "Pre-training learning rate");
  add(*pre, "--tau", {"tau_pretrain"}, real, "Pre-training temperature");
  add(*pre, "--negatives", {"pretrain", "negatives"}, count, "Negatives per anchor");
  add(*pre, "--anchors-per-epoch", {"pretrain", "anchors_per_epoch"}, count_or_none,
      "Anchors drawn per epoch, or none for all");
  add(*pre, "--include-positive", {"pretrain", "include_positive_in_denominator"}, flag,
      "Put the positive in the loss denominator", true);

  std::vector<std::size_t> sweep_values;
  std::string sweep_axis;
  bool save_prompts = false;
  for (CLI::App* sub : {bench, ablate, sweep, exp}) {
    add(*sub, "--steps", {"steps"}, count, "Inference steps K");
    add(*sub, "--cond-hidden", {"cond_hidden"}, count, "Condition-net hidden size s");
    add(*sub, "--prompt-kind", {"std_prompt", "kind"}, text, "gpf_plus, gpf or graphprompt");
    add(*sub, "--num-prompts", {"std_prompt", "num_prompts"}, count, "gpf_plus prompt count N");
    add(*sub, "--chain-features", {"chain_features"}, flag, "Prompt the previous step's features", true);
    if (sub == exp) continue;
    add(*sub, "--shots", {"shots"}, count, "Support instances per class");
    add(*sub, "--epochs", {"tune", "epochs"}, count, "Tuning epochs");
    add(*sub, "--lr", {"tune", "lr"}, real, "Tuning learning rate");
    add(*sub, "--tau", {"tau_downstream"}, real, "Downstream temperature");
    add(*sub, "--num-tasks", {"num_tasks"}, count, "Few-shot tasks");
    add(*sub, "--num-seeds", {"num_seeds"}, count, "Tuning repeats per task");
    add(*sub, "--max-query", {"max_query"}, count_or_none, "Query cap per task, or none");
    if (sub != ablate) add(*sub, "--variant", {"variant"}, text, "full, no_cot or layer_only_<l>");
  }
  bench->add_flag("--save-prompts", save_prompts, "Save every tuned prompt state under <out>/prompts");
  sweep->add_option("--axis", sweep_axis, "steps, cond_hidden or shots")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required()->delimiter(',');
  std::string prompts_path;
  exp->add_option("--prompts", prompts_path, "Tuned prompt state file")->required();
  for (CLI::App* sub : {pre, bench, ablate, sweep, exp}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "gcot: error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::config);
  }

  try {
    json flags = json::object();
    for (const auto& o : overrides) {
      if (o.option->count() == 0) continue;
      json* slot = &flags;
      for (std::size_t i = 0; i + 1 < o.path.size(); ++i) slot = &(*slot)[o.path[i]];
      (*slot)[o.path.back()] = o.value(*o.option);
    }
    const json file = config_path.empty() ? json(nullptr) : read_config_file(config_path);

    // The dataset's own task is the default, so peek at the path first.
    std::string dataset;
    for (const json* layer : std::array<const json*, 2>{&file, &flags}) {
      if (layer->is_object() && layer->contains("dataset_path") && layer->at("dataset_path").is_string()) {
        dataset = layer->at("dataset_path").get<std::string>();
      }
    }
    if (dataset.empty()) throw ConfigError("no dataset given (--dataset or dataset_path in --config)");
    std::optional<graph::TaskKind> dataset_task;
    {
      std::ifstream meta(fs::path(dataset) / "meta.json");
      if (!meta) throw DataError("cannot read " + (fs::path(dataset) / "meta.json").string());
      try {
        const json m = json::parse(meta);
        if (m.contains("task") && m.at("task").is_string()) {
          dataset_task = graph::parse_task(m.at("task").get<std::string>());
        }
      } catch (const json::exception& e) {
        throw DataError((fs::path(dataset) / "meta.json").string() + ": " + e.what());
      }
    }
    const char* env = std::getenv("GCOT_OUT_DIR");
    const RunConfig config =
        resolve(file, flags, dataset_task, env ? std::optional<std::string>(env) : std::nullopt);

    if (print_config) {
      out << to_json(config).dump(2) << '\n';
      return 0;
    }
    if (pre->parsed()) {
      cmd_pretrain(config, out);
    } else if (bench->parsed()) {
      cmd_bench(config, save_prompts, out);
    } else if (ablate->parsed()) {
      cmd_ablate(config, out);
    } else if (sweep->parsed()) {
      cmd_sweep(config, parse_axis(sweep_axis), sweep_values, out);
    } else if (exp->parsed()) {
      cmd_export_embeddings(config, prompts_path, out);
    }
    return 0;
  } catch (const Error& e) {
    err << "gcot: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "gcot: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace gcot::cli
