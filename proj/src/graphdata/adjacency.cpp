#include "gcot/graphdata/adjacency.hpp"

#include <cmath>

#include "gcot/error.hpp"

namespace gcot::graph {

namespace {

std::vector<double> degrees(const GraphRecord& g) {
  std::vector<double> deg(g.num_nodes(), 1.0);  // self-loop
  for (auto [u, v] : g.edges) {
    deg[u] += 1.0;
    deg[v] += 1.0;
  }
  return deg;
}

// 1/sqrt(d_u d_v) rounds once, so small cases such as 1/2 and 1/3 are exact.
void append_entries(const GraphRecord& g, std::size_t offset, std::vector<SparseMatrix::Entry>& out) {
  const auto deg = degrees(g);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) out.push_back({offset + i, offset + i, 1.0 / deg[i]});
  for (auto [u, v] : g.edges) {
    const double w = 1.0 / std::sqrt(deg[u] * deg[v]);
    out.push_back({offset + u, offset + v, w});
    out.push_back({offset + v, offset + u, w});
  }
}

}  // namespace

Tensor normalized_adjacency(const GraphRecord& g) { return normalized_adjacency_sparse(g).to_dense(); }

SparseMatrix normalized_adjacency_sparse(const GraphRecord& g) {
  std::vector<SparseMatrix::Entry> entries;
  append_entries(g, 0, entries);
  return SparseMatrix(g.num_nodes(), g.num_nodes(), std::move(entries));
}

SparseMatrix stacked_adjacency(const GraphCollection& c) {
  std::vector<SparseMatrix::Entry> entries;
  std::size_t offset = 0;
  for (const auto& g : c.graphs) {
    append_entries(g, offset, entries);
    offset += g.num_nodes();
  }
  return SparseMatrix(offset, offset, std::move(entries));
}

Tensor readout_sum(const Tensor& h, const GraphRecord& g) {
  if (h.rows() != g.num_nodes()) {
    throw DimensionError("readout_sum: " + std::to_string(h.rows()) + " embedding rows for a graph of " +
                         std::to_string(g.num_nodes()) + " nodes");
  }
  Tensor out(1, h.cols());
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) out(0, c) += h(r, c);
  return out;
}

GraphOperators build_operators(const GraphCollection& c) {
  GraphOperators ops;
  auto adj = std::make_shared<SparseMatrix>(stacked_adjacency(c));
  ops.adjacency_t = std::make_shared<SparseMatrix>(adj->transposed());
  ops.adjacency = std::move(adj);
  std::vector<SparseMatrix::Entry> entries;
  std::size_t offset = 0;
  for (const auto& g : c.graphs) {
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      auto row = g.features.row(i);
      for (std::size_t k = 0; k < row.size(); ++k)
        if (row[k] != 0.0) entries.push_back({offset + i, k, row[k]});
    }
    offset += g.num_nodes();
  }
  auto feats = std::make_shared<SparseMatrix>(offset, c.meta.feature_dim, std::move(entries));
  ops.features_t = std::make_shared<SparseMatrix>(feats->transposed());
  ops.features = std::move(feats);
  ops.node_offsets = c.node_offsets();
  return ops;
}

}  // namespace gcot::graph
