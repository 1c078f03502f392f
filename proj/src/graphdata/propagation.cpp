#include "gcot/graphdata/propagation.hpp"

#include <algorithm>

#include "gcot/error.hpp"

namespace gcot::graph {

using num::SparseMatrix;

PropagationPlan full_plan(std::shared_ptr<const SparseMatrix> adjacency,
                          std::shared_ptr<const SparseMatrix> adjacency_t, std::size_t layers) {
  PropagationPlan plan;
  plan.full = true;
  std::vector<std::size_t> all(adjacency->rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  plan.rows.assign(layers + 1, all);
  plan.blocks.assign(layers, adjacency);
  plan.blocks_t.assign(layers, adjacency_t);
  return plan;
}

PropagationPlan plan_for_targets(const SparseMatrix& adjacency, std::span<const std::size_t> targets,
                                 std::size_t layers) {
  PropagationPlan plan;
  plan.rows.resize(layers + 1);
  auto& last = plan.rows[layers];
  last.assign(targets.begin(), targets.end());
  std::sort(last.begin(), last.end());
  last.erase(std::unique(last.begin(), last.end()), last.end());
  for (std::size_t i : last)
    if (i >= adjacency.rows()) throw DimensionError("propagation target " + std::to_string(i) + " out of range");

  std::vector<char> mark(adjacency.rows(), 0);
  for (std::size_t l = layers; l > 0; --l) {
    std::fill(mark.begin(), mark.end(), 0);
    for (std::size_t r : plan.rows[l]) {
      mark[r] = 1;
      for (std::size_t c : adjacency.row_cols(r)) mark[c] = 1;
    }
    auto& prev = plan.rows[l - 1];
    for (std::size_t i = 0; i < mark.size(); ++i)
      if (mark[i]) prev.push_back(i);
  }
  plan.blocks.resize(layers);
  plan.blocks_t.resize(layers);
  for (std::size_t l = 1; l <= layers; ++l) {
    auto block = std::make_shared<SparseMatrix>(adjacency.block(plan.rows[l], plan.rows[l - 1]));
    plan.blocks_t[l - 1] = std::make_shared<SparseMatrix>(block->transposed());
    plan.blocks[l - 1] = std::move(block);
  }
  return plan;
}

std::vector<std::size_t> positions_in(std::span<const std::size_t> superset,
                                      std::span<const std::size_t> subset) {
  std::vector<std::size_t> pos;
  pos.reserve(subset.size());
  for (std::size_t x : subset) {
    auto it = std::lower_bound(superset.begin(), superset.end(), x);
    if (it == superset.end() || *it != x) throw DimensionError("row " + std::to_string(x) + " missing from plan");
    pos.push_back(static_cast<std::size_t>(it - superset.begin()));
  }
  return pos;
}

}  // namespace gcot::graph
