#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "gcot/error.hpp"
#include "gcot/graphdata/adjacency.hpp"
#include "gcot/graphdata/propagation.hpp"
#include "gcot/numcore/kernels.hpp"
#include "toy_graphs.hpp"

using namespace gcot;
using namespace gcot::graph;
using namespace testing_support;

namespace {

const std::filesystem::path kFixtures = std::filesystem::path(GCOT_SOURCE_DIR) / "fixtures";

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Ten nodes in one graph, features of dimension 2, a path of edges.
std::filesystem::path small_dataset(const std::string& name) {
  auto dir = scratch_dir(name);
  write_file(dir / "meta.json",
             R"({"name":"small","num_nodes":10,"num_graphs":1,"feature_dim":2,"node_classes":2,)"
             R"("graph_classes":0,"task":"node","edge_convention":"undirected"})");
  std::string nodes, feats, edges;
  for (int i = 0; i < 10; ++i) {
    nodes += std::to_string(i) + "\t0\t" + std::to_string(i % 2) + "\n";
    feats += std::to_string(i) + "\t" + std::to_string(i) + "\t0.5\n";
    if (i + 1 < 10) edges += std::to_string(i) + "\t" + std::to_string(i + 1) + "\n";
  }
  write_file(dir / "nodes.tsv", nodes);
  write_file(dir / "features.tsv", feats);
  write_file(dir / "edges.tsv", edges);
  return dir;
}

std::string load_error(const std::filesystem::path& dir) {
  try {
    load_dataset(dir);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

Tensor permuted(const Tensor& m, const std::vector<std::size_t>& perm, bool rows_and_cols) {
  Tensor out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      out(perm[i], rows_and_cols ? perm[j] : j) = m(i, j);
    }
  }
  return out;
}

GraphRecord relabel(const GraphRecord& g, const std::vector<std::size_t>& perm) {
  GraphRecord out;
  out.features = permuted(g.features, perm, false);
  for (auto [u, v] : g.edges) out.edges.emplace_back(std::min(perm[u], perm[v]), std::max(perm[u], perm[v]));
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

}  // namespace

TEST_CASE("fixtures load with the published statistics") {
  const auto cora = load_dataset(kFixtures / "cora");
  CHECK(cora.graphs.size() == 1);
  CHECK(cora.num_nodes() == 2708);
  CHECK(cora.meta.feature_dim == 1433);
  CHECK(cora.meta.node_classes == 7);
  CHECK(cora.meta.task == TaskKind::node);

  const auto mutag = load_dataset(kFixtures / "mutag");
  CHECK(mutag.graphs.size() == 188);
  CHECK(mutag.meta.graph_classes == 2);
  CHECK(mutag.meta.feature_dim == 7);
  CHECK(mutag.meta.task == TaskKind::graph);
  for (const auto& g : mutag.graphs) CHECK(g.graph_label.has_value());
}

TEST_CASE("load rejects broken directories") {
  SUBCASE("edge to an absent node") {
    auto dir = small_dataset("absent_node");
    write_file(dir / "edges.tsv", "0\t1\n3\t9999\n");
    const auto msg = load_error(dir);
    CHECK(msg.find("9999") != std::string::npos);
    CHECK(msg.find("edges.tsv:2") != std::string::npos);
  }
  SUBCASE("missing meta.json names the file") {
    auto dir = small_dataset("no_meta");
    std::filesystem::remove(dir / "meta.json");
    CHECK(load_error(dir).find("meta.json") != std::string::npos);
  }
  SUBCASE("non-numeric feature") {
    auto dir = small_dataset("bad_feature");
    write_file(dir / "features.tsv", "0\t1\tabc\n");
    CHECK(load_error(dir).find("features.tsv:1") != std::string::npos);
  }
  SUBCASE("count mismatch against meta") {
    auto dir = small_dataset("count_mismatch");
    write_file(dir / "nodes.tsv", "0\t0\t0\n1\t0\t1\n");
    CHECK_FALSE(load_error(dir).empty());
  }
  SUBCASE("self-loop and duplicate edges") {
    auto dir = small_dataset("self_loop");
    write_file(dir / "edges.tsv", "2\t2\n");
    CHECK_FALSE(load_error(dir).empty());
    write_file(dir / "edges.tsv", "1\t2\n2\t1\n");
    CHECK_FALSE(load_error(dir).empty());
  }
  SUBCASE("label out of range") {
    auto dir = small_dataset("bad_label");
    write_file(dir / "nodes.tsv", "0\t0\t5\n");
    CHECK_FALSE(load_error(dir).empty());
  }
}

TEST_CASE("write then load reproduces the collection") {
  const auto small = load_dataset(small_dataset("roundtrip_src"));
  auto dir = scratch_dir("roundtrip_small");
  write_dataset(small, dir);
  CHECK(load_dataset(dir) == small);

  auto multi = random_graph_collection(9, 3, 4);
  auto dir2 = scratch_dir("roundtrip_multi");
  write_dataset(multi, dir2);
  CHECK(load_dataset(dir2) == multi);

  const auto mutag = load_dataset(kFixtures / "mutag");
  auto dir3 = scratch_dir("roundtrip_mutag");
  write_dataset(mutag, dir3);
  CHECK(load_dataset(dir3) == mutag);
}

TEST_CASE("normalized adjacency examples") {
  GraphRecord single;
  single.features = Tensor(1, 1);
  CHECK(normalized_adjacency(single) == Tensor::from_rows({{1.0}}));

  CHECK(normalized_adjacency(path_graph(2)) == Tensor::from_rows({{0.5, 0.5}, {0.5, 0.5}}));

  const Tensor a = normalized_adjacency(path_graph(3));
  CHECK(std::abs(a(0, 0) - 0.5) < 1e-15);
  CHECK(std::abs(a(0, 1) - 1.0 / std::sqrt(6.0)) < 1e-15);
  CHECK(std::abs(a(1, 1) - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(a(2, 2) - 0.5) < 1e-15);
  CHECK(a(0, 2) == 0.0);
}

TEST_CASE("normalized adjacency is symmetric and relabeling-equivariant") {
  auto rng = num::make_rng({11});
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + num::uniform_index(15, rng);
    const auto g = random_graph(n, 2, 0.3, 0, rng);
    const Tensor a = normalized_adjacency(g);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(a(i, i) > 0.0);
      for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(a(i, j) - a(j, i)) < 1e-12);
    }
    CHECK(normalized_adjacency_sparse(g).to_dense() == a);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    num::shuffle(perm.begin(), perm.end(), rng);
    const Tensor b = normalized_adjacency(relabel(g, perm));
    const Tensor expected = permuted(a, perm, true);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(b.data()[i] - expected.data()[i]) < 1e-12);
  }
}

TEST_CASE("stacked adjacency is block diagonal") {
  const auto c = random_graph_collection(5, 2, 8);
  const Tensor stacked = stacked_adjacency(c).to_dense();
  const auto offsets = c.node_offsets();
  for (std::size_t g = 0; g < c.graphs.size(); ++g) {
    const Tensor block = normalized_adjacency(c.graphs[g]);
    for (std::size_t i = 0; i < block.rows(); ++i) {
      for (std::size_t j = 0; j < block.cols(); ++j) CHECK(stacked(offsets[g] + i, offsets[g] + j) == block(i, j));
    }
  }
  double outside = 0.0;
  for (std::size_t i = 0; i < stacked.rows(); ++i) {
    for (std::size_t j = 0; j < stacked.cols(); ++j) {
      const auto gi = std::upper_bound(offsets.begin(), offsets.end(), i) - offsets.begin();
      const auto gj = std::upper_bound(offsets.begin(), offsets.end(), j) - offsets.begin();
      if (gi != gj) outside += std::abs(stacked(i, j));
    }
  }
  CHECK(outside == 0.0);
}

TEST_CASE("readout_sum examples and permutation invariance") {
  GraphRecord one;
  one.features = Tensor(1, 1);
  CHECK(readout_sum(Tensor::from_rows({{1.5, -2}}), one) == Tensor::from_rows({{1.5, -2}}));

  const auto two = path_graph(2);
  CHECK(readout_sum(Tensor::from_rows({{1, 2}, {3, 4}}), two) == Tensor::from_rows({{4, 6}}));
  CHECK_THROWS_AS(readout_sum(Tensor(3, 2), two), DimensionError);

  auto rng = num::make_rng({5});
  const auto g = random_graph(12, 1, 0.2, 0, rng);
  Tensor h = num::normal(12, 6, 0.0, 3.0, rng);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  num::shuffle(perm.begin(), perm.end(), rng);
  const Tensor a = readout_sum(h, g);
  const Tensor b = readout_sum(permuted(h, perm, false), g);
  for (std::size_t j = 0; j < a.cols(); ++j) CHECK(std::abs(a(0, j) - b(0, j)) < 1e-9);
}

TEST_CASE("propagation plans cover the receptive field") {
  const auto g = path_graph(8);
  const auto adj = normalized_adjacency_sparse(g);
  const std::vector<std::size_t> targets{5, 2, 5};
  const auto plan = plan_for_targets(adj, targets, 2);
  CHECK(plan.targets() == std::vector<std::size_t>{2, 5});
  CHECK(plan.rows[1] == std::vector<std::size_t>{1, 2, 3, 4, 5, 6});
  CHECK(plan.inputs() == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});

  // Two rounds of propagation through the plan equal the whole-graph rows.
  auto rng = num::make_rng({2});
  const Tensor x = num::normal(8, 3, 0.0, 1.0, rng);
  Tensor full1, full2;
  num::kernels::spmm(adj, x, full1);
  num::kernels::spmm(adj, full1, full2);
  Tensor in(plan.inputs().size(), 3);
  for (std::size_t i = 0; i < plan.inputs().size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) in(i, j) = x(plan.inputs()[i], j);
  }
  Tensor p1, p2;
  num::kernels::spmm(*plan.blocks[0], in, p1);
  num::kernels::spmm(*plan.blocks[1], p1, p2);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(p2(t, j) == full2(plan.targets()[t], j));
  }
  CHECK(positions_in(plan.rows[1], plan.targets()) == std::vector<std::size_t>{1, 4});
}
