#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "exgnas/train.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace exgnas;
using exgnas::oracle::model_loss;
using exgnas::testing::random_graph;
using exgnas::testing::random_matrix;

namespace {

ArchitectureParams one_layer(Attention att, Activation act, EmbSize emb) {
  ArchitectureParams a;
  a.layers = {LayerParams{att, act, emb}};
  return canonicalize(a);
}

// Head becomes an exact pass-through so the logits expose the merged representation.
void make_head_identity(GnnModel& m) {
  auto& h = m.head();
  h.weight.value = Matrix::identity(h.weight.value.rows());
  h.bias->value.fill(0.0);
}

Matrix logits_of(GnnModel& m, const Graph& g) {
  Tape t;
  const Propagation prop = make_propagation(g);
  return t.value(m.forward(t, g, prop));
}

std::vector<std::size_t> all_nodes(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Two labels, edges only inside a label, feature = label + small noise.
Graph separable_graph(std::size_t n, std::mt19937_64& rng) {
  std::vector<int> y(n);
  for (std::size_t u = 0; u < n; ++u) y[u] = static_cast<int>(u % 2);
  std::uniform_real_distribution<double> noise(-0.1, 0.1), coin(0.0, 1.0);
  Matrix x(n, 2);
  for (std::size_t u = 0; u < n; ++u) {
    x(u, 0) = y[u] + noise(rng);
    x(u, 1) = noise(rng);
  }
  std::vector<std::pair<std::size_t, std::size_t>> e;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (y[u] == y[v] && coin(rng) < 0.1) e.emplace_back(u, v);
  return Graph::from_edges(n, e, x, y, 2);
}

}  // namespace

TEST(AttentionCoeff, Examples) {
  const Graph pair = Graph::from_edges(2, {{0, 1}}, Matrix(2, 1), {0, 1}, 2);
  const Matrix proj = Matrix{{0.3, -1.0}, {2.0, 0.5}};
  const Matrix zero(2, 1);
  EXPECT_EQ(attention_coeff(Attention::Constant, 0, 1, pair, proj, zero, zero), 1.0);
  EXPECT_DOUBLE_EQ(attention_coeff(Attention::Gcn, 0, 1, pair, proj, zero, zero), 0.5);

  const Graph star = Graph::from_edges(4, {{0, 1}, {0, 2}, {0, 3}}, Matrix(4, 1), {0, 1, 0, 1}, 2);
  std::mt19937_64 rng(1);
  const Matrix proj4 = random_matrix(4, 2, rng);
  for (std::size_t v = 0; v < 4; ++v)
    EXPECT_DOUBLE_EQ(attention_coeff(Attention::Gat, 0, v, star, proj4, zero, zero), 0.25);
  EXPECT_DOUBLE_EQ(attention_coeff(Attention::Gat, 1, 0, star, proj4, zero, zero), 0.5);
}

TEST(Forward, IsolatedNodeWithIdentityWeightsIsUnchanged) {
  const Graph g = Graph::from_edges(1, {}, Matrix{{0.7, -0.2}}, {0}, 2);
  GnnModel m(one_layer(Attention::Constant, Activation::None, EmbSize::labels()), 2, 2, 1);
  m.layers()[0].weight.value = Matrix::identity(2);
  make_head_identity(m);
  EXPECT_EQ(logits_of(m, g), (Matrix{{0.7, -0.2}}));
}

TEST(Forward, PathGraphSumsSelfAndNeighbor) {
  const Graph g = Graph::from_edges(2, {{0, 1}}, Matrix{{1.0, 0.0}, {0.0, 1.0}}, {0, 1}, 2);
  GnnModel m(one_layer(Attention::Constant, Activation::None, EmbSize::labels()), 2, 2, 1);
  m.layers()[0].weight.value = Matrix::identity(2);
  make_head_identity(m);
  EXPECT_EQ(logits_of(m, g), (Matrix{{1.0, 1.0}, {1.0, 1.0}}));
}

TEST(Forward, ConcatMergedWidth) {
  ArchitectureParams a;
  a.layers = {{Attention::Gcn, Activation::Relu, EmbSize(16)}, {Attention::Gat, Activation::Tanh, EmbSize(32)}};
  a.jknet = JkMode::Concat;
  a.pre_jknet = true;
  a.pre_mlp = true;
  a.pre_mlp_emb = EmbSize(64);
  a.post_mlp_layers = 1;
  a.post_mlp_hidden = 64;
  GnnModel m(canonicalize(a), 5, 3, 2);
  EXPECT_EQ(m.merged_width(), 112u);
  EXPECT_EQ(m.post_mlp()[0].weight.value.rows(), 112u);

  a.jknet = JkMode::None;  // the skip is concatenated to the last layer
  EXPECT_EQ(GnnModel(canonicalize(a), 5, 3, 2).merged_width(), 96u);
}

TEST(Forward, GcnMatchesDenseNormalizedAdjacency) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial % 49;
    const Graph g = random_graph(n, 0.15, 3, 4, rng);
    GnnModel m(one_layer(Attention::Gcn, Activation::None, EmbSize::labels()), 4, 3, trial);
    make_head_identity(m);
    const Matrix expect = oracle::gcn_dense(g, m.layers()[0].weight.value);
    const Matrix got = logits_of(m, g);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
  }
}

TEST(Forward, MaxOfEqualOutputsIsThatOutput) {
  std::mt19937_64 rng(4);
  const Matrix x = random_matrix(7, 5, rng);
  for (int k = 1; k <= 4; ++k) {
    Tape t;
    std::vector<Var> parts(k, t.constant(x));
    EXPECT_EQ(t.value(ops::rowwise_max(parts)), x);
  }

  // Edgeless graph, second layer with identity weights: both layer outputs coincide.
  const Graph g = Graph::from_edges(6, {}, random_matrix(6, 3, rng), {0, 1, 0, 1, 0, 1}, 2);
  ArchitectureParams a;
  a.layers = {{Attention::Gcn, Activation::None, EmbSize(3)}, {Attention::Gcn, Activation::None, EmbSize(3)}};
  a.jknet = JkMode::Max;
  GnnModel merged(canonicalize(a), 3, 2, 5);
  GnnModel single(one_layer(Attention::Gcn, Activation::None, EmbSize(3)), 3, 2, 6);
  merged.layers()[1].weight.value = Matrix::identity(3);
  single.layers()[0].weight.value = merged.layers()[0].weight.value;
  single.head().weight.value = merged.head().weight.value;
  single.head().bias->value = random_matrix(1, 2, rng);
  merged.head().bias->value = single.head().bias->value;
  EXPECT_EQ(logits_of(merged, g), logits_of(single, g));
}

TEST(Forward, PermutationEquivariance) {
  std::mt19937_64 rng(33);
  const SearchSpace space;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 10;
    const Graph g = random_graph(n, 0.3, 3, 4, rng);
    const ArchitectureParams arch = fill_random(space, Assignment{}, rng);
    GnnModel m(arch, 4, 3, trial);
    const Matrix out = logits_of(m, g);

    std::vector<std::size_t> perm = all_nodes(n);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> e;
    for (auto [u, v] : g.edge_list()) e.emplace_back(perm[u], perm[v]);
    Matrix x(n, 4);
    std::vector<int> y(n);
    for (std::size_t u = 0; u < n; ++u) {
      y[perm[u]] = g.labels()[u];
      for (std::size_t c = 0; c < 4; ++c) x(perm[u], c) = g.features()(u, c);
    }
    const Matrix pout = logits_of(m, Graph::from_edges(n, e, x, y, 3));
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(pout(perm[u], c), out(u, c), 1e-9) << describe(arch);
  }
}

TEST(Model, RandomArchitecturesBuildTrainAndDifferentiate) {
  std::mt19937_64 rng(2024);
  const Graph g = random_graph(12, 0.3, 3, 5, rng);
  const auto mask = all_nodes(12);
  const Propagation prop = make_propagation(g);
  const SearchSpace space;
  int checked = 0;
  for (int trial = 0; trial < 220; ++trial) {
    const ArchitectureParams arch = fill_random(space, Assignment{}, rng);
    GnnModel m(arch, 5, 3, trial);
    const Matrix out = logits_of(m, g);
    ASSERT_EQ(out.rows(), 12u);
    ASSERT_EQ(out.cols(), 3u);

    auto params = m.parameters();
    std::set<Parameter*> unique(params.begin(), params.end());
    EXPECT_EQ(unique.size(), params.size());

    EXPECT_LE(oracle::model_grad_rel_error(m, g, mask, rng, 1e-6, 6), 1e-3) << describe(arch);

    const double before = model_loss(m, g, prop, mask);
    for (auto* p : params) p->zero_grad();
    {
      Tape t;
      t.backward(ops::softmax_cross_entropy(m.forward(t, g, prop), g.labels(), mask));
    }
    Adam adam({.lr = 1e-7, .weight_decay = 0.0});
    adam.step(params);
    EXPECT_LE(model_loss(m, g, prop, mask), before + 1e-12) << describe(arch);
    ++checked;
  }
  EXPECT_GE(checked, 200);
}

TEST(Train, SeparableGraphReachesHighValidationAuc) {
  std::mt19937_64 rng(6);
  const Graph g = separable_graph(80, rng);
  const Split s = make_split(g, 1);

  // Oracle: thresholding the first feature ranks every positive above every negative.
  Matrix oracle(80, 2);
  for (std::size_t u = 0; u < 80; ++u) {
    oracle(u, 1) = g.features()(u, 0);
    oracle(u, 0) = -g.features()(u, 0);
  }
  ASSERT_EQ(auc_score(oracle, g.labels(), s.val), 1.0);

  for (Attention att : {Attention::Constant, Attention::Gcn, Attention::Gat})
    for (Activation act : {Activation::None, Activation::Relu, Activation::Sigmoid, Activation::Tanh}) {
      const auto r = train_model(one_layer(att, act, EmbSize(16)), g, s, 3).result;
      EXPECT_GE(r.val_auc, 0.99) << to_string(att) << " " << to_string(act);
      EXPECT_LE(r.epochs_run, 500);
      EXPECT_FALSE(r.diverged);
    }
}

TEST(Train, Deterministic) {
  std::mt19937_64 rng(8);
  const Graph g = random_graph(40, 0.1, 3, 4, rng);
  const Split s = make_split(g, 2);
  ArchitectureParams a;
  a.layers = {{Attention::Gat, Activation::Relu, EmbSize(16)}, {Attention::Gcn, Activation::Tanh, EmbSize(32)}};
  a.jknet = JkMode::Concat;
  a.pre_jknet = true;
  const auto r1 = train_model(a, g, s, 9).result;
  const auto r2 = train_model(a, g, s, 9).result;
  EXPECT_TRUE(r1.same_metrics(r2));
  EXPECT_GT(r1.train_seconds, 0.0);
  EXPECT_GE(r1.val_auc, 0.0);
  EXPECT_LE(r1.val_auc, 1.0);
  EXPECT_GE(r1.test_auc, 0.0);
  EXPECT_LE(r1.test_auc, 1.0);
}

TEST(Train, PatienceStopsTenEpochsAfterPlateau) {
  std::mt19937_64 rng(10);
  const Graph g = random_graph(30, 0.2, 2, 3, rng);
  const Split s = make_split(g, 4);
  TrainConfig cfg;
  cfg.adam.lr = 0.0;  // parameters never move: the plateau starts at epoch 1
  EXPECT_EQ(train_model(one_layer(Attention::Gcn, Activation::Relu, EmbSize(16)), g, s, 1, cfg).result.epochs_run, 11);
  cfg.patience = 3;
  EXPECT_EQ(train_model(one_layer(Attention::Gcn, Activation::Relu, EmbSize(16)), g, s, 1, cfg).result.epochs_run, 4);
}

TEST(Train, DivergenceIsReported) {
  std::mt19937_64 rng(12);
  const Graph g = random_graph(30, 0.2, 2, 3, rng);
  TrainConfig cfg;
  cfg.adam.lr = 1e300;
  const auto r = train_model(one_layer(Attention::Constant, Activation::None, EmbSize(16)), g, make_split(g, 1), 1, cfg)
                     .result;
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.val_auc, 0.0);
  EXPECT_FALSE(r.diagnostic.empty());
}

TEST(Auc, Examples) {
  const std::vector<int> y{0, 0, 1, 1};
  const auto nodes = all_nodes(4);
  EXPECT_EQ(auc_score(Matrix{{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.1, 0.9}}, y, nodes), 1.0);
  EXPECT_EQ(auc_score(Matrix(4, 2, 0.5), y, nodes), 0.5);
  EXPECT_THROW(auc_score(Matrix(4, 2), std::vector<int>{1, 1, 1, 1}, nodes), AucUndefined);
  try {
    auc_score(Matrix(4, 2), std::vector<int>{0, 0, 0, 0}, nodes);
  } catch (const AucUndefined& e) {
    EXPECT_STREQ(e.what(), "AUC undefined on this node set");
  }
}

TEST(Auc, MatchesPairwiseCounting) {
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> label(0, 2), coarse(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> y(6);
    for (auto& l : y) l = label(rng);
    if (std::count(y.begin(), y.end(), y[0]) == 6) continue;
    Matrix scores = random_matrix(6, 3, rng, 0.0, 1.0);
    if (trial % 2)  // force ties
      for (auto& v : scores.data()) v = coarse(rng);
    const auto nodes = all_nodes(6);
    EXPECT_NEAR(auc_score(scores, y, nodes), oracle::auc_pairwise(scores, y, nodes), 1e-12);
  }
}

TEST(Auc, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<int> label(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> y(30);
    for (auto& l : y) l = label(rng);
    Matrix scores = random_matrix(30, 4, rng);
    Matrix moved = scores;
    for (auto& v : moved.data()) v = std::exp(3.0 * v) + v * v * v;
    std::vector<std::size_t> nodes = all_nodes(30);
    nodes.resize(20);
    EXPECT_EQ(auc_score(scores, y, nodes), auc_score(moved, y, nodes));
  }
}

TEST(ArchitectureJson, RoundTripAndStrictness) {
  std::mt19937_64 rng(16);
  const SearchSpace space;
  for (int i = 0; i < 200; ++i) {
    const ArchitectureParams a = fill_random(space, Assignment{}, rng);
    const auto j = to_json(a);
    EXPECT_EQ(architecture_from_json(nlohmann::json::parse(j.dump())), a);
    if (!a.pre_mlp) {
      EXPECT_TRUE(j["pre_mlp_emb"].is_null());
    }
    if (a.post_mlp_layers == 0) {
      EXPECT_TRUE(j["post_mlp_hidden"].is_null());
    }
    if (a.jknet == JkMode::Max) {
      for (const auto& l : a.layers) EXPECT_EQ(l.emb_size, a.layers.front().emb_size);
    }
  }
  auto j = to_json(one_layer(Attention::Gcn, Activation::Relu, EmbSize(16)));
  j["dropout"] = 0.5;
  try {
    architecture_from_json(j);
    FAIL() << "expected ArchitectureError";
  } catch (const ArchitectureError& e) {
    EXPECT_STREQ(e.what(), "unknown key 'dropout'");
  }
}
