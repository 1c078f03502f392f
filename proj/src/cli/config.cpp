#include "gcot/cli/config.hpp"

#include <array>
#include <fstream>

#include "gcot/error.hpp"

namespace gcot::cli {

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError("config: missing key " + where + key);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: " + where + key + " has the wrong type (" + it->dump() + ")");
  }
}

std::size_t count_field(const json& obj, const char* key, const std::string& where, std::size_t min) {
  const json& v = obj.contains(key) ? obj.at(key) : json();
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ConfigError("config: " + where + key + " must be a non-negative integer, got " + v.dump());
  }
  const auto n = v.get<std::size_t>();
  if (n < min) throw ConfigError("config: " + where + key + " must be >= " + std::to_string(min));
  return n;
}

std::optional<std::size_t> optional_count(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError("config: missing key " + where + key);
  if (obj.at(key).is_null()) return std::nullopt;
  return count_field(obj, key, where, 1);
}

double positive(const json& obj, const char* key, const std::string& where) {
  const auto v = field<double>(obj, key, where);
  if (!(v > 0.0)) throw ConfigError("config: " + where + key + " must be > 0");
  return v;
}

json optional_to_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

cot::CotConfig RunConfig::cot_config() const {
  return {steps, cond_hidden, prompt_kind, num_prompts, chain_features};
}

encoder::EncoderConfig RunConfig::encoder_config(std::size_t input_dim) const {
  return {num_layers, input_dim, hidden_dim, final_relu};
}

pretrain::PretrainConfig RunConfig::pretrain_config() const {
  pretrain::PretrainConfig p;
  p.epochs = pretrain_epochs;
  p.learning_rate = pretrain_lr;
  p.tau = tau_pretrain;
  p.negatives = negatives;
  p.anchors_per_epoch = anchors_per_epoch;
  p.include_positive_in_denominator = include_positive_in_denominator;
  p.seed = base_seed;
  return p;
}

fewshot::TuneConfig RunConfig::tune_config() const { return {tune_epochs, tune_lr, tau_downstream}; }

fewshot::BenchConfig RunConfig::bench_config() const {
  fewshot::BenchConfig b;
  b.shots = shots;
  b.num_tasks = num_tasks;
  b.num_seeds = num_seeds;
  b.base_seed = base_seed;
  b.variant = fewshot::Variant::parse(variant);
  b.cot = cot_config();
  b.tune = tune_config();
  b.max_query = max_query;
  b.jobs = jobs;
  return b;
}

json to_json(const RunConfig& c) {
  return json{
      {"dataset_path", c.dataset_path},
      {"task", graph::task_name(c.task)},
      {"shots", c.shots},
      {"steps", c.steps},
      {"cond_hidden", c.cond_hidden},
      {"std_prompt", {{"kind", cot::kind_name(c.prompt_kind)}, {"num_prompts", c.num_prompts}}},
      {"chain_features", c.chain_features},
      {"tau_pretrain", c.tau_pretrain},
      {"tau_downstream", c.tau_downstream},
      {"encoder",
       {{"num_layers", c.num_layers},
        {"hidden_dim", c.hidden_dim},
        {"final_activation", c.final_relu ? "relu" : "linear"}}},
      {"pretrain",
       {{"epochs", c.pretrain_epochs},
        {"lr", c.pretrain_lr},
        {"negatives", c.negatives},
        {"anchors_per_epoch", optional_to_json(c.anchors_per_epoch)},
        {"include_positive_in_denominator", c.include_positive_in_denominator}}},
      {"tune", {{"epochs", c.tune_epochs}, {"lr", c.tune_lr}}},
      {"num_tasks", c.num_tasks},
      {"num_seeds", c.num_seeds},
      {"base_seed", c.base_seed},
      {"max_query", optional_to_json(c.max_query)},
      {"variant", c.variant},
      {"jobs", c.jobs},
      {"out_dir", c.out_dir},
      {"checkpoint", c.checkpoint},
  };
}

json default_json(graph::TaskKind task, const std::optional<std::string>& env_out_dir) {
  RunConfig c;
  c.task = task;
  if (task == graph::TaskKind::graph) {
    c.steps = 3;
    c.cond_hidden = 8;
  }
  if (env_out_dir && !env_out_dir->empty()) c.out_dir = *env_out_dir;
  return to_json(c);
}

void merge_layer(json& base, const json& layer, const std::string& where) {
  if (!layer.is_object()) throw ConfigError("config: " + (where.empty() ? "top level" : where) + " must be an object");
  for (const auto& [key, value] : layer.items()) {
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("config: unknown key " + where + key);
    if (it->is_object()) {
      merge_layer(*it, value, where + key + ".");
    } else {
      *it = value;
    }
  }
}

RunConfig from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig c;
  c.dataset_path = field<std::string>(doc, "dataset_path", "");
  c.task = graph::parse_task(field<std::string>(doc, "task", ""));
  c.shots = count_field(doc, "shots", "", 1);
  c.steps = count_field(doc, "steps", "", 1);
  c.cond_hidden = count_field(doc, "cond_hidden", "", 1);
  const auto sp = field<json>(doc, "std_prompt", "");
  c.prompt_kind = cot::parse_kind(field<std::string>(sp, "kind", "std_prompt."));
  c.num_prompts = count_field(sp, "num_prompts", "std_prompt.", 1);
  c.chain_features = field<bool>(doc, "chain_features", "");
  c.tau_pretrain = positive(doc, "tau_pretrain", "");
  c.tau_downstream = positive(doc, "tau_downstream", "");
  const auto enc = field<json>(doc, "encoder", "");
  c.num_layers = count_field(enc, "num_layers", "encoder.", 1);
  c.hidden_dim = count_field(enc, "hidden_dim", "encoder.", 1);
  const auto activation = field<std::string>(enc, "final_activation", "encoder.");
  if (activation != "linear" && activation != "relu") {
    throw ConfigError("config: encoder.final_activation must be linear or relu, got " + activation);
  }
  c.final_relu = activation == "relu";
  const auto pre = field<json>(doc, "pretrain", "");
  c.pretrain_epochs = count_field(pre, "epochs", "pretrain.", 1);
  c.pretrain_lr = field<double>(pre, "lr", "pretrain.");
  c.negatives = count_field(pre, "negatives", "pretrain.", 1);
  c.anchors_per_epoch = optional_count(pre, "anchors_per_epoch", "pretrain.");
  c.include_positive_in_denominator = field<bool>(pre, "include_positive_in_denominator", "pretrain.");
  const auto tune = field<json>(doc, "tune", "");
  c.tune_epochs = count_field(tune, "epochs", "tune.", 0);
  c.tune_lr = field<double>(tune, "lr", "tune.");
  c.num_tasks = count_field(doc, "num_tasks", "", 1);
  c.num_seeds = count_field(doc, "num_seeds", "", 1);
  c.base_seed = field<std::uint64_t>(doc, "base_seed", "");
  c.max_query = optional_count(doc, "max_query", "");
  c.variant = field<std::string>(doc, "variant", "");
  c.jobs = count_field(doc, "jobs", "", 1);
  c.out_dir = field<std::string>(doc, "out_dir", "");
  c.checkpoint = field<std::string>(doc, "checkpoint", "");

  if (c.dataset_path.empty()) throw ConfigError("config: dataset_path is required");
  if (c.out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
  if (!(c.pretrain_lr >= 0.0) || !(c.tune_lr >= 0.0)) throw ConfigError("config: learning rates must be >= 0");
  if (c.checkpoint.empty()) c.checkpoint = (std::filesystem::path(c.out_dir) / "encoder.ckpt").string();
  fewshot::Variant::parse(c.variant);
  c.cot_config().validate();
  return c;
}

RunConfig resolve(const json& file_layer, const json& flag_layer, std::optional<graph::TaskKind> dataset_task,
                  const std::optional<std::string>& env_out_dir) {
  // The task picks the defaults, so it is settled before anything else.
  std::optional<graph::TaskKind> task;
  for (const json* layer : std::array<const json*, 2>{&file_layer, &flag_layer}) {
    if (layer->is_object() && layer->contains("task")) {
      const auto& v = layer->at("task");
      if (!v.is_string()) throw ConfigError("config: task must be a string");
      task = graph::parse_task(v.get<std::string>());
    }
  }
  if (!task) task = dataset_task.value_or(graph::TaskKind::node);
  json doc = default_json(*task, env_out_dir);
  if (!file_layer.is_null()) merge_layer(doc, file_layer, "");
  if (!flag_layer.is_null()) merge_layer(doc, flag_layer, "");
  return from_json(doc);
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

}  // namespace gcot::cli
