#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "gcot/numcore/sparse.hpp"

namespace gcot::graph {

/// Rows needed at each layer of an L-layer propagation to produce a set of
/// target rows. rows[L] holds the targets and rows[l-1] the closed
/// neighbourhood of rows[l]. blocks[l-1] is the adjacency restricted to
/// rows[l] × rows[l-1]; its entries keep the full matrix's order, so target
/// rows come out bit-identical to a whole-graph computation.
struct PropagationPlan {
  std::vector<std::vector<std::size_t>> rows;  // L + 1 sorted index sets
  std::vector<std::shared_ptr<const num::SparseMatrix>> blocks;
  std::vector<std::shared_ptr<const num::SparseMatrix>> blocks_t;
  bool full = false;

  std::size_t layers() const { return blocks.size(); }
  const std::vector<std::size_t>& inputs() const { return rows.front(); }
  const std::vector<std::size_t>& targets() const { return rows.back(); }
};

/// Plan over every node: each block is the adjacency itself.
PropagationPlan full_plan(std::shared_ptr<const num::SparseMatrix> adjacency,
                          std::shared_ptr<const num::SparseMatrix> adjacency_t, std::size_t layers);

/// Plan for the given targets (any order, duplicates allowed).
PropagationPlan plan_for_targets(const num::SparseMatrix& adjacency, std::span<const std::size_t> targets,
                                 std::size_t layers);

/// Positions of `subset` inside the sorted `superset`; every element must
/// be present.
std::vector<std::size_t> positions_in(std::span<const std::size_t> superset,
                                      std::span<const std::size_t> subset);

}  // namespace gcot::graph
