#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gcot/cli/config.hpp"

namespace gcot::cli {

/// Parses arguments, runs one subcommand and returns the process exit
/// code: 0 success, 2 config, 3 data, 4 numeric. Diagnostics go to `err`
/// as a single line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Subcommands on a resolved configuration. Each writes <name>.config.json
// into out_dir next to its outputs.

/// <checkpoint>, <out>/pretrain_log.csv
void cmd_pretrain(const RunConfig& config, std::ostream& out);

/// <out>/results.csv, <out>/summary.json; with save_prompts also
/// <out>/prompts/task<t>_repeat<r>.txt.
void cmd_bench(const RunConfig& config, bool save_prompts, std::ostream& out);

/// <out>/ablation.csv, <out>/ablation_summary.json
void cmd_ablate(const RunConfig& config, std::ostream& out);

enum class SweepAxis { steps, cond_hidden, shots };
SweepAxis parse_axis(const std::string& name);
const char* axis_name(SweepAxis axis);

/// <out>/sweep.csv with one summary row per value, <out>/sweep_runs.csv.
/// All values share base_seed.
void cmd_sweep(const RunConfig& config, SweepAxis axis, const std::vector<std::size_t>& values, std::ostream& out);

/// <out>/answer_embeddings.csv and <out>/thought_step<k>.csv, k = 1..K-1.
void cmd_export_embeddings(const RunConfig& config, const std::filesystem::path& prompts, std::ostream& out);

}  // namespace gcot::cli
