#include <cmath>
#include <fstream>

#include "doctest.h"
#include "gcot/cot/cot.hpp"
#include "gcot/error.hpp"
#include "gcot/fewshot/fewshot.hpp"
#include "cot_oracle.hpp"
#include "gradcheck.hpp"
#include "toy_graphs.hpp"

using namespace gcot;
using namespace gcot::cot;
using namespace testing_support;

namespace {

graph::GraphRecord five_node_toy() {
  graph::GraphRecord g;
  auto rng = num::make_rng({55});
  g.features = Tensor(5, 3);
  for (double& v : g.features.data()) v = 0.2 + num::uniform_unit(rng);
  g.edges = {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}};
  return g;
}

// Initial state moved well away from identity prompts.
PromptState perturbed_state(const CotConfig& config, const encoder::EncoderConfig& enc, std::uint64_t seed) {
  auto rng = num::make_rng({seed});
  auto st = init_state(config, enc, rng);
  for (Tensor* t : {&st.fusion, &st.w1, &st.b1, &st.w2, &st.b2, &st.prompts, &st.projections}) {
    for (double& v : t->data()) v += 0.3 * num::normal(1, 1, 0.0, 1.0, rng).item();
  }
  return st;
}

encoder::EncoderWeights toy_weights(std::size_t d, std::size_t h, std::uint64_t seed) {
  auto rng = num::make_rng({seed});
  return encoder::init_weights({3, d, h}, rng);
}

}  // namespace

TEST_CASE("thought fusion, condition-net and prompt examples") {
  const Tensor h1 = Tensor::from_rows({{1, 0}}), h2 = Tensor::from_rows({{0, 2}});
  CHECK(fuse_thought(std::vector{h1, h2}, Tensor::from_rows({{2, 0.5}})) == Tensor::from_rows({{2, 1}}));
  const std::vector layers{Tensor::from_rows({{3, 6}}), Tensor::from_rows({{6, 0}}), Tensor::from_rows({{0, 3}})};
  CHECK(fuse_thought(layers, Tensor::from_rows({{0, 0, 1}})) == layers[2]);
  const Tensor mean = fuse_thought(layers, Tensor::from_rows({{1.0 / 3, 1.0 / 3, 1.0 / 3}}));
  CHECK(std::abs(mean(0, 0) - 3.0) < 1e-15);
  CHECK(std::abs(mean(0, 1) - 3.0) < 1e-15);
  CHECK_THROWS_AS(fuse_thought(layers, Tensor::from_rows({{1, 1}})), DimensionError);

  CotConfig config;
  config.cond_hidden = 3;
  auto rng = num::make_rng({4});
  auto st = init_state(config, {2, 4, 2}, rng);
  CHECK(condnet_prompts(num::normal(6, 2, 0.0, 5.0, rng), st) == Tensor(6, 4, 1.0));
  st.w1 = Tensor(2, 3);
  st.w2 = num::normal(3, 4, 0.0, 1.0, rng);
  st.b2 = Tensor::from_rows({{1, 2, 3, 4}});
  CHECK(condnet_prompts(num::normal(2, 2, 0.0, 1.0, rng), st) == Tensor::from_rows({{1, 2, 3, 4}, {1, 2, 3, 4}}));

  // s = 1, one thought entry: leaky_relu(-2·1.5 + 0.5) = -0.025; times 4, plus 1.
  CotConfig scalar;
  scalar.cond_hidden = 1;
  auto s1 = init_state(scalar, {1, 1, 1}, rng);
  s1.w1 = Tensor::from_rows({{1.5}});
  s1.b1 = Tensor::from_rows({{0.5}});
  s1.w2 = Tensor::from_rows({{4}});
  s1.b2 = Tensor::from_rows({{1}});
  CHECK(std::abs(condnet_prompts(Tensor::from_rows({{-2}}), s1).item() - 0.9) < 1e-15);

  const Tensor x = Tensor::from_rows({{4, 5}});
  CHECK(apply_feature_prompt(Tensor(1, 2, 1.0), x) == x);
  CHECK(apply_feature_prompt(Tensor(1, 2), x) == Tensor(1, 2));
  CHECK(apply_feature_prompt(Tensor::from_rows({{2, 3}}), x) == Tensor::from_rows({{8, 15}}));
  CHECK_THROWS_AS(apply_feature_prompt(Tensor(2, 2), x), DimensionError);
}

TEST_CASE("standard prompt examples") {
  const Tensor h = Tensor::from_rows({{1, 2}, {3, -1}});
  CotConfig config;
  config.num_prompts = 1;
  auto rng = num::make_rng({9});
  auto st = init_state(config, {2, 2, 2}, rng);
  st.prompts = Tensor::from_rows({{2, 5}});
  CHECK(standard_prompt_apply(h, st) == Tensor::from_rows({{2, 10}, {6, -5}}));

  config.num_prompts = 3;
  st = init_state(config, {2, 2, 2}, rng);
  st.prompts = Tensor::from_rows({{1, 4}, {2, 5}, {3, 0}});
  st.projections = Tensor(3, 2);
  const Tensor uniform = standard_prompt_apply(h, st);
  CHECK(std::abs(uniform(0, 0) - 2.0) < 1e-15);
  CHECK(std::abs(uniform(0, 1) - 6.0) < 1e-15);

  // Logits (ln 3, 0) for node 0: prompt 0.75·p¹ + 0.25·p².
  config.num_prompts = 2;
  st = init_state(config, {2, 2, 2}, rng);
  st.prompts = Tensor::from_rows({{4, 8}, {0, 4}});
  st.projections = Tensor::from_rows({{std::log(3.0), 0}, {0, 0}});
  const Tensor mixed = standard_prompt_apply(Tensor::from_rows({{1, 0}}), st);
  CHECK(std::abs(mixed(0, 0) - 3.0) < 1e-12);
  CHECK(mixed(0, 1) == 0.0);

  CotConfig gp;
  gp.kind = StdPromptKind::graphprompt;
  auto g = init_state(gp, {2, 2, 2}, rng);
  g.prompts = Tensor::from_rows({{0.5, 2}});
  CHECK(standard_prompt_apply(h, g) == Tensor::from_rows({{0.5, 4}, {1.5, -2}}));
  CotConfig plain;
  plain.kind = StdPromptKind::gpf;
  CHECK(standard_prompt_apply(h, init_state(plain, {2, 2, 2}, rng)) == h);
}

TEST_CASE("one step is the plain prompted encoder, and identity prompts add nothing") {
  const auto c = random_node_collection(30, 6, 3, 31, 0.15);
  const auto w = toy_weights(6, 8, 32);
  const auto ops = graph::build_operators(c);
  const CotModel model(ops, w);
  for (auto kind : {StdPromptKind::gpf_plus, StdPromptKind::graphprompt}) {
    CotConfig k1;
    k1.kind = kind;
    k1.steps = 1;
    auto r1 = num::make_rng({5});
    const auto s1 = init_state(k1, {3, 6, 8}, r1);
    const auto out1 = model.run(s1);
    CHECK(out1.answer == standard_prompt_apply(*model.base_layers().back(), s1));
    const auto dense = encoder::encode(c.graphs[0].features, graph::normalized_adjacency(c.graphs[0]), w);
    const Tensor h = standard_prompt_apply(dense.back(), s1);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(std::abs(h.data()[i] - out1.answer.data()[i]) < 1e-12);
    CHECK(out1.thoughts.empty());

    for (std::size_t k : {2, 3}) {
      CotConfig kk = k1;
      kk.steps = k;
      auto rk = num::make_rng({5});
      const auto sk = init_state(kk, {3, 6, 8}, rk);
      CHECK(sk.prompts == s1.prompts);
      const auto outk = model.run(sk);
      CHECK(outk.answer == out1.answer);
      CHECK(outk.thoughts.size() == k - 1);
    }
  }
  // The free function builds the same model.
  CotConfig k2;
  const auto s2 = perturbed_state(k2, {3, 6, 8}, 6);
  CHECK(cot_forward(ops, w, s2).answer == model.run(s2).answer);
}

TEST_CASE("three steps on a five-node toy match the straight-line oracle") {
  const auto g = five_node_toy();
  const auto w = toy_weights(3, 4, 8);
  const auto ops = graph::build_operators(single_graph(g, 0));
  for (auto kind : {StdPromptKind::gpf_plus, StdPromptKind::graphprompt, StdPromptKind::gpf}) {
    for (bool chain : {false, true}) {
      CotConfig config;
      config.steps = 3;
      config.cond_hidden = 2;
      config.num_prompts = 2;
      config.kind = kind;
      config.chain_features = chain;
      const auto st = perturbed_state(config, {3, 3, 4}, 12);
      const Tensor got = cot_forward(ops, w, st).answer;
      const Mat want = oracle_forward(g, w, st);
      double worst = 0.0;
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) worst = std::max(worst, std::abs(got(i, j) - want[i][j]));
      INFO(std::string(kind_name(kind)), " chain=", chain);
      CHECK(worst < 1e-9);
    }
  }
}

TEST_CASE("planned forwards give the full-graph rows") {
  const auto c = random_node_collection(40, 5, 3, 77, 0.08);
  const auto w = toy_weights(5, 6, 78);
  const CotModel model(graph::build_operators(c), w);
  for (auto kind : {StdPromptKind::gpf_plus, StdPromptKind::gpf}) {
    CotConfig config;
    config.steps = 3;
    config.cond_hidden = 4;
    config.kind = kind;
    const auto st = perturbed_state(config, {3, 5, 6}, 79);
    const Tensor full = model.run(st).answer;
    const std::vector<std::size_t> targets{3, 17, 18, 39};
    Tape tape;
    const auto vars = bind(tape, st, Trainable{false, false, false});
    const Tensor part = model.forward(tape, vars, st, model.prepare(targets, config)).answer.value();
    for (std::size_t t = 0; t < targets.size(); ++t) {
      for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(part(t, j) - full(targets[t], j)) < 1e-12);
    }
  }
}

TEST_CASE("gradients through the unrolled chain match finite differences") {
  const auto c = random_node_collection(12, 5, 2, 101, 0.3);
  const auto w = toy_weights(5, 8, 102);
  const CotModel model(graph::build_operators(c), w);
  for (auto kind : {StdPromptKind::gpf_plus, StdPromptKind::graphprompt, StdPromptKind::gpf}) {
    CotConfig config;
    config.steps = 3;
    config.cond_hidden = 4;
    config.num_prompts = 2;
    config.kind = kind;
    // Seed chosen so no relu sits within the difference step of a kink.
    const auto st = perturbed_state(config, {3, 5, 8}, 104);
    const auto plan = model.prepare_full(config);
    const std::vector<std::size_t> labels{0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 1, 0};
    std::vector<Tensor> params{st.fusion, st.w1, st.b1, st.w2, st.b2, st.prompts};
    if (kind == StdPromptKind::gpf_plus) params.push_back(st.projections);
    LossBuilder build = [&](Tape& tape, const std::vector<Var>& theta) {
      PromptVars v{theta[0], theta[1], theta[2], theta[3], theta[4], theta[5], {}};
      if (theta.size() > 6) v.projections = theta[6];
      Var h = model.forward(tape, v, st, plan).answer;
      Var protos = num::group_mean(h, {{0, 2}, {1, 3}});
      return fewshot::downstream_loss(h, labels, protos, 0.5);
    };
    INFO(std::string(kind_name(kind)));
    CHECK(max_relative_error(build, params) < 1e-3);
  }
}

TEST_CASE("one leaf per parameter whatever K, and the encoder stays frozen") {
  const auto c = random_node_collection(15, 4, 2, 5, 0.25);
  const auto w = toy_weights(4, 5, 6);
  const auto before = encoder::digest(w);
  const CotModel model(graph::build_operators(c), w);
  for (std::size_t k : {2, 3, 5}) {
    CotConfig config;
    config.steps = k;
    config.cond_hidden = 3;
    const auto st = perturbed_state(config, {3, 4, 5}, 7);
    Tape tape;
    const auto vars = bind(tape, st, {});
    Var loss = num::sum(model.forward(tape, vars, st, model.prepare_full(config)).answer);
    tape.backward(loss);
    std::size_t leaves = 0;
    for (num::NodeId id = 0; id < tape.size(); ++id) leaves += tape.kind(id) == num::OpKind::parameter;
    CHECK(leaves == 7);
    for (num::NodeId id = 0; id < tape.size(); ++id) {
      if (tape.kind(id) == num::OpKind::constant) CHECK_FALSE(tape.requires_grad(id));
    }
  }
  CHECK(encoder::digest(model.weights()) == before);
  CHECK(encoder::digest(w) == before);
}

TEST_CASE("prompt checkpoints round-trip") {
  const auto dir = scratch_dir("prompt_ckpt");
  for (auto kind : {StdPromptKind::gpf_plus, StdPromptKind::gpf, StdPromptKind::graphprompt}) {
    CotConfig config;
    config.kind = kind;
    config.steps = 3;
    config.cond_hidden = 4;
    const auto st = perturbed_state(config, {2, 5, 6}, 3);
    const auto path = dir / (std::string(kind_name(kind)) + ".txt");
    save_prompt_state(st, path);
    CHECK(load_prompt_state(path) == st);
  }
  std::ofstream(dir / "bad.txt") << "GCOT-PROMPT v2\n";
  CHECK_THROWS_AS(load_prompt_state(dir / "bad.txt"), FormatError);
  std::ofstream(dir / "short.txt") << "GCOT-PROMPT v1\n2 2 6 4 5 gpf_plus 5\n0.5 0.5\n";
  CHECK_THROWS_AS(load_prompt_state(dir / "short.txt"), CorruptionError);
  CHECK_THROWS_AS(load_prompt_state(dir / "absent.txt"), DataError);
}
