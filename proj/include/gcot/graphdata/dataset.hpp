#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcot/numcore/tensor.hpp"

namespace gcot::graph {

using num::Tensor;

enum class TaskKind { node, graph };

const char* task_name(TaskKind kind);
/// Throws ConfigError for anything other than "node" or "graph".
TaskKind parse_task(const std::string& name);

/// One graph. Node ids are local (0..n-1); edges are undirected pairs with
/// u < v, stored once, no self-loops.
struct GraphRecord {
  Tensor features;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  /// One entry per node, -1 where the label is missing. Empty when the
  /// dataset has no node labels at all.
  std::vector<int> node_labels;
  std::optional<int> graph_label;

  std::size_t num_nodes() const noexcept { return features.rows(); }

  friend bool operator==(const GraphRecord&, const GraphRecord&) = default;
};

struct DatasetMeta {
  std::string name;
  std::size_t feature_dim = 0;
  int node_classes = 0;   // 0: no node labels
  int graph_classes = 0;  // 0: no graph labels
  TaskKind task = TaskKind::node;
  std::string edge_convention;
  std::vector<std::string> class_names;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct GraphCollection {
  DatasetMeta meta;
  std::vector<GraphRecord> graphs;

  std::size_t num_nodes() const;
  std::size_t num_edges() const;
  /// Global id of each graph's first node, plus the total at the end.
  std::vector<std::size_t> node_offsets() const;

  friend bool operator==(const GraphCollection&, const GraphCollection&) = default;
};

/// Reads a canonical dataset directory:
///   meta.json    name, num_nodes, num_graphs, num_edges, feature_dim,
///                node_classes, graph_classes, task, edge_convention
///   nodes.tsv    node_id  graph_id  label        (label -1 = missing)
///   features.tsv node_id  x_1 .. x_d
///   edges.tsv    src  dst                        (global node ids)
///   graphs.tsv   graph_id  label                 (required when num_graphs > 1)
/// Files have no header row. Node ids run 0..N-1 in order and each graph's
/// nodes are contiguous. Throws DataError naming the file on any violation.
GraphCollection load_dataset(const std::filesystem::path& dir);

/// Writes the canonical files; load_dataset(dir) then reproduces `c`.
void write_dataset(const GraphCollection& c, const std::filesystem::path& dir);

/// Checks the record invariants (shapes, edge form, label ranges).
void validate(const GraphCollection& c);

}  // namespace gcot::graph
