#pragma once

#include <memory>
#include <vector>

#include "gcot/graphdata/dataset.hpp"
#include "gcot/numcore/sparse.hpp"

namespace gcot::graph {

using num::SparseMatrix;

/// Dense D^-1/2 (A + I) D^-1/2.
Tensor normalized_adjacency(const GraphRecord& g);

/// Same matrix in CSR form.
SparseMatrix normalized_adjacency_sparse(const GraphRecord& g);

/// Block-diagonal normalized adjacency of every graph, indexed by global
/// node id (graph order, then local order).
SparseMatrix stacked_adjacency(const GraphCollection& c);

/// Column-wise sum of the rows of h; h must have one row per node of g.
Tensor readout_sum(const Tensor& h, const GraphRecord& g);

/// Sparse and dense views of a collection shared by training and
/// evaluation. Immutable once built.
struct GraphOperators {
  std::shared_ptr<const SparseMatrix> adjacency;
  std::shared_ptr<const SparseMatrix> adjacency_t;
  std::shared_ptr<const SparseMatrix> features;
  std::shared_ptr<const SparseMatrix> features_t;
  std::vector<std::size_t> node_offsets;

  std::size_t num_nodes() const { return adjacency->rows(); }
  std::size_t feature_dim() const { return features->cols(); }
  std::size_t num_graphs() const { return node_offsets.size() - 1; }
};

GraphOperators build_operators(const GraphCollection& c);

}  // namespace gcot::graph
