#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "doctest.h"
#include "gcot/error.hpp"
#include "gcot/graphdata/adjacency.hpp"
#include "gcot/graphdata/propagation.hpp"
#include "gcot/numcore/ops.hpp"
#include "gcot/pretrain/pretrain.hpp"
#include "gradcheck.hpp"
#include "toy_graphs.hpp"

using namespace gcot;
using namespace gcot::pretrain;
using namespace testing_support;

namespace {

bool adjacent(const graph::GraphRecord& g, std::size_t u, std::size_t v) {
  const auto key = std::make_pair(std::min(u, v), std::max(u, v));
  return std::find(g.edges.begin(), g.edges.end(), key) != g.edges.end();
}

// Loss from hand-placed embedding rows: anchor 0, positive 1, negatives 2..
double loss_of(const Tensor& emb, std::size_t k, double tau, bool include_positive = false) {
  Tape tape;
  LinkSample s{0, 1, {}};
  for (std::size_t j = 0; j < k; ++j) s.negatives.push_back(2 + j);
  return pretrain_loss(tape.constant(emb), {s}, tau, include_positive).value().item();
}

}  // namespace

TEST_CASE("pretrain loss examples") {
  // cosine(anchor, positive) = 1, cosine(anchor, negative) = 0.
  const Tensor emb = Tensor::from_rows({{1, 0}, {2, 0}, {0, 3}});
  CHECK(std::abs(loss_of(emb, 1, 1.0) - -1.0) < 1e-12);
  CHECK(std::abs(loss_of(emb, 1, 0.5) - -2.0) < 1e-12);
  const Tensor same = Tensor::from_rows({{1, 1}, {1, 0}, {0, 1}});
  CHECK(std::abs(loss_of(same, 1, 1.0)) < 1e-12);
  // With the positive in the denominator: -(1 - ln(e + 1)).
  CHECK(std::abs(loss_of(emb, 1, 1.0, true) - (std::log(std::exp(1.0) + 1.0) - 1.0)) < 1e-12);

  Tape tape;
  CHECK_THROWS_AS(pretrain_loss(tape.constant(Tensor::from_rows({{0, 0}, {1, 0}, {0, 1}})), {{0, 1, {2}}}, 1.0),
                  DegenerateInputError);
  CHECK_THROWS_AS(pretrain_loss(tape.constant(emb), {{0, 1, {2}}}, 0.0), ConfigError);
}

TEST_CASE("link sampling respects the graph") {
  PretrainConfig config;
  config.negatives = 1;

  SUBCASE("triangle positives are neighbours") {
    graph::GraphRecord tri;
    tri.features = Tensor(4, 1, 1.0);
    tri.edges = {{0, 1}, {0, 2}, {1, 2}};
    const auto c = single_graph(tri, 0);
    for (std::size_t epoch = 0; epoch < 20; ++epoch) {
      for (const auto& s : sample_link_pairs(c, config, epoch)) {
        CHECK(adjacent(tri, s.anchor, s.positive));
        CHECK(s.negatives == std::vector<std::size_t>{3});
      }
    }
  }

  SUBCASE("star centre has no non-neighbour and is skipped") {
    graph::GraphRecord star;
    star.features = Tensor(4, 1, 1.0);
    star.edges = {{0, 1}, {0, 2}, {0, 3}};
    const auto samples = sample_link_pairs(single_graph(star, 0), config, 0);
    CHECK(samples.size() == 3);
    for (const auto& s : samples) {
      CHECK(s.anchor != 0);
      CHECK(s.positive == 0);
    }
  }

  SUBCASE("random graphs: membership, distinctness, determinism") {
    config.negatives = 3;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto c = random_node_collection(25, 2, 0, seed, 0.15);
      config.seed = seed;
      const auto a = sample_link_pairs(c, config, 4);
      CHECK(a == sample_link_pairs(c, config, 4));
      CHECK(a != sample_link_pairs(c, config, 5));
      for (const auto& s : a) {
        CHECK(adjacent(c.graphs[0], s.anchor, s.positive));
        std::set<std::size_t> distinct(s.negatives.begin(), s.negatives.end());
        CHECK(distinct.size() == 3);
        for (std::size_t b : s.negatives) {
          CHECK(b != s.anchor);
          CHECK_FALSE(adjacent(c.graphs[0], s.anchor, b));
        }
      }
    }
  }

  SUBCASE("multi-graph samples stay inside the anchor's graph") {
    const auto c = random_graph_collection(12, 2, 3);
    config.negatives = 1;
    const auto offsets = c.node_offsets();
    auto graph_of = [&](std::size_t v) {
      return std::upper_bound(offsets.begin(), offsets.end(), v) - offsets.begin() - 1;
    };
    for (const auto& s : sample_link_pairs(c, config, 0)) {
      CHECK(graph_of(s.positive) == graph_of(s.anchor));
      CHECK(graph_of(s.negatives[0]) == graph_of(s.anchor));
    }
  }

  SUBCASE("anchors per epoch") {
    config.anchors_per_epoch = 7;
    CHECK(sample_link_pairs(random_node_collection(30, 2, 0, 1), config, 0).size() == 7);
  }

  SUBCASE("zero edges") {
    graph::GraphRecord empty;
    empty.features = Tensor(5, 1, 1.0);
    CHECK_THROWS_AS(sample_link_pairs(single_graph(empty, 0), config, 0), InsufficientDataError);
  }
}

TEST_CASE("pretrain loss gradient matches finite differences") {
  const auto c = random_node_collection(6, 3, 0, 42, 0.5);
  const auto ops = graph::build_operators(c);
  const auto plan = graph::full_plan(ops.adjacency, ops.adjacency_t, 2);
  PretrainConfig config;
  config.negatives = 1;
  const auto samples = sample_link_pairs(c, config, 0);
  REQUIRE_FALSE(samples.empty());
  auto rng = num::make_rng({3});
  // Positive weights keep every relu active so the loss is smooth here.
  std::vector<Tensor> params;
  for (auto [r, col] : {std::pair{3, 4}, std::pair{4, 4}}) {
    Tensor t(r, col);
    for (double& v : t.data()) v = 0.1 + num::uniform_unit(rng);
    params.push_back(t);
  }
  LossBuilder build = [&](Tape&, const std::vector<Var>& theta) {
    Var first = num::spmm(ops.features, theta[0], ops.features_t);
    const auto layers = encoder::propagate(plan, first, theta, false);
    return pretrain_loss(layers.back(), samples, 0.5);
  };
  CHECK(max_relative_error(build, params) < 1e-4);
}

TEST_CASE("pretrain_run is deterministic and lowers the loss") {
  const auto c = random_node_collection(10, 4, 0, 9, 0.35);
  PretrainConfig config;
  config.epochs = 2;
  config.negatives = 2;
  config.seed = 5;
  const encoder::EncoderConfig enc{2, 4, 8};
  const auto a = pretrain_run(c, enc, config);
  const auto b = pretrain_run(c, enc, config);
  CHECK(a.weights == b.weights);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.weights.frozen);
  config.seed = 6;
  CHECK_FALSE(pretrain_run(c, enc, config).weights == a.weights);

  const auto larger = random_node_collection(40, 6, 0, 10, 0.12);
  PretrainConfig long_run;
  long_run.epochs = 60;
  long_run.learning_rate = 1e-2;
  const auto r = pretrain_run(larger, {3, 6, 16}, long_run);
  REQUIRE(r.epoch_loss.size() == 60);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());

  const auto dir = scratch_dir("pretrain_log");
  write_log(r.epoch_loss, dir / "log.csv");
  std::ifstream in(dir / "log.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  CHECK(line == "epoch,loss");
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 60);

  CHECK_THROWS_AS(pretrain_run(c, {2, 5, 8}, config), DimensionError);
  graph::GraphRecord empty;
  empty.features = Tensor(3, 4, 1.0);
  CHECK_THROWS_AS(pretrain_run(single_graph(empty, 0), enc, config), InsufficientDataError);
}
