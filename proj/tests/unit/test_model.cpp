#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "op_catalog.hpp"
#include "oracles.hpp"
#include "psim/dataset.hpp"
#include "psim/error.hpp"
#include "psim/model.hpp"
#include "psim/optim.hpp"

using namespace psim;

namespace {

ModelConfig small_config(int m = 9) {
  ModelConfig c;
  c.m = m;
  c.init_seed = 5;
  return c;
}

PartitionResult partition_of(const Graph& g, std::vector<std::vector<NodeId>> communities) {
  PartitionResult p;
  p.k = static_cast<int>(communities.size());
  for (auto& c : communities) std::sort(c.begin(), c.end());
  p.communities = std::move(communities);
  p.subgraphs = extract_subgraphs(g, p.communities);
  p.converged = true;
  return p;
}

/// Node relabeling of g together with its partition.
std::pair<Graph, PartitionResult> permuted(const Graph& g, const PartitionResult& p, Rng& rng) {
  std::vector<NodeId> perm(g.node_count());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Graph h = oracle::relabel(g, perm, g.id() + "'");
  std::vector<std::vector<NodeId>> communities;
  for (const auto& c : p.communities) {
    std::vector<NodeId> mapped;
    for (NodeId v : c) mapped.push_back(perm[static_cast<std::size_t>(v)]);
    communities.push_back(mapped);
  }
  std::reverse(communities.begin(), communities.end());
  PartitionResult q = partition_of(h, communities);
  return {std::move(h), std::move(q)};
}

double score(const PSimGnn& model, const PartitionResult& a, const PartitionResult& b,
             ForwardStats* stats = nullptr) {
  Tape t(false);
  return model.forward(t, a, b, stats).scalar();
}

GinLayerParams identity_gin(ParameterSet& ps, double eps) {
  GinLayerParams layer;
  layer.eps = &ps.add("eps", Matrix::Constant(1, 1, eps));
  layer.mlp.first.weight = &ps.add("w1", Matrix::Identity(1, 1));
  layer.mlp.first.bias = &ps.add("b1", Matrix::Zero(1, 1));
  layer.mlp.slope = &ps.add("s", Matrix::Constant(1, 1, 1.0));
  layer.mlp.second.weight = &ps.add("w2", Matrix::Identity(1, 1));
  layer.mlp.second.bias = &ps.add("b2", Matrix::Zero(1, 1));
  return layer;
}

}  // namespace

TEST_CASE("model config validation and JSON") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.m = 10;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.m = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = ModelConfig{};
  c.gin_dims.clear();
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  CHECK_THROWS_AS(PSimGnn{c}, ArgumentError);

  ModelConfig d;
  d.m = 3;
  d.rounds = 2;
  d.cross_attention_off = true;
  d.init_seed = 77;
  const auto back = model_config_from_json(model_config_to_json(d));
  CHECK(back.m == 3);
  CHECK(back.rounds == 2);
  CHECK(back.cross_attention_off);
  CHECK(back.init_seed == 77);
  CHECK(back.gin_dims == d.gin_dims);
  CHECK(model_config_from_json(R"({"m": 0})").k == 3);
  CHECK_THROWS_AS(model_config_from_json(R"({"m": 12})"), ArgumentError);
  CHECK_THROWS_AS(model_config_from_json("[1]"), DataError);
  CHECK_THROWS_AS(model_config_from_json(R"({"m": "x"})"), DataError);
}

TEST_CASE("gin_layer examples") {
  ParameterSet ps;
  const auto layer = identity_gin(ps, 0.0);
  Tape t;
  const Graph p3("p3", 3, {{0, 1}, {1, 2}});
  Matrix x(3, 1);
  x << 2, 1, 3;
  CHECK(gin_layer(t, t.constant(x), p3, layer).value()(1, 0) == 6.0);
  const Graph single("s", 1, {});
  CHECK(gin_layer(t, t.constant(Matrix::Constant(1, 1, 5.0)), single, layer).scalar() == 5.0);
  ps.at("eps").value(0, 0) = 1.0;
  Tape fresh;
  const Graph p2("p2", 2, {{0, 1}});
  CHECK(gin_layer(fresh, fresh.constant(Matrix::Ones(2, 1)), p2, layer).value()(0, 0) == 3.0);
  CHECK_THROWS_AS(gin_layer(fresh, fresh.constant(Matrix::Ones(2, 2)), p2, layer), ArgumentError);
}

TEST_CASE("parameter layout follows the configuration") {
  const PSimGnn model(small_config());
  const auto& ps = model.parameters();
  CHECK(ps.at("encoder.gin0.mlp.l1.w").value.rows() == 1);
  CHECK(ps.at("encoder.gin0.mlp.l2.w").value.cols() == 64);
  CHECK(ps.at("encoder.gin2.mlp.l2.w").value.cols() == 16);
  CHECK(ps.at("pool.w_z").value.rows() == 16);
  CHECK(ps.at("pool.w_z").value.cols() == 16);
  CHECK(ps.at("matcher.update.l1.w").value.rows() == 48);
  CHECK(ps.at("fusion.coarse.w").value.rows() == 9);
  CHECK(ps.at("fusion.coarse.w").value.cols() == 8);
  CHECK(ps.at("fusion.fine.w").value.rows() == 9);
  CHECK(ps.at("fusion.final0.w").value.rows() == 16);
  CHECK(ps.at("fusion.final0.w").value.cols() == 8);
  CHECK(ps.at("fusion.final1.w").value.cols() == 4);
  CHECK(ps.at("fusion.final2.w").value.cols() == 2);
  CHECK(ps.at("fusion.final3.w").value.cols() == 1);

  const PSimGnn k_variant(small_config(3));
  CHECK(k_variant.parameters().at("fusion.fine.w").value.rows() == 3);
  const PSimGnn up(small_config(0));
  CHECK_THROWS_AS(up.parameters().at("fusion.fine.w"), ArgumentError);
  CHECK(up.parameters().at("fusion.fine_constant").value.cols() == 8);

  std::set<std::string> groups;
  for (const auto* p : ps.all()) groups.insert(PSimGnn::group_of(p->name));
  CHECK(groups == std::set<std::string>{"encoder", "pool", "matcher", "fusion"});

  const PSimGnn same(small_config());
  CHECK(same.parameters().at("pool.w_z").value == ps.at("pool.w_z").value);
}

TEST_CASE("encoder shape and symmetry") {
  const PSimGnn model(small_config());
  Tape t(false);
  const Graph g = generate_ba(20, 1, 3, "g");
  const Matrix h = model.encode_subgraph(t, g).value();
  CHECK(h.rows() == 20);
  CHECK(h.cols() == 16);

  // Leaves of a star share rooted neighborhoods.
  const Graph star("star", 4, {{0, 1}, {0, 2}, {0, 3}});
  const Matrix s = model.encode_subgraph(t, star).value();
  CHECK(s.row(1).isApprox(s.row(2)));
  CHECK(s.row(1).isApprox(s.row(3)));

  Rng rng(4);
  std::vector<NodeId> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Matrix hp = model.encode_subgraph(t, oracle::relabel(g, perm, "p")).value();
  for (NodeId v = 0; v < 20; ++v) CHECK(h.row(v).isApprox(hp.row(perm[static_cast<std::size_t>(v)]), 1e-12));
}

TEST_CASE("attention pooling") {
  PSimGnn model(small_config());
  Rng rng(9);
  Matrix x(3, 16);
  x.setRandom();
  Tape t(false);
  model.parameters().at("pool.w_z").value.setZero();
  CHECK(model.attention_pool(t, t.constant(x)).value().isApprox(0.5 * x.colwise().sum()));

  model.parameters().at("pool.w_z").value.setRandom();
  Tape t2(false);
  const Matrix w = model.parameters().at("pool.w_z").value;
  const Matrix one = x.topRows(1);
  const Eigen::RowVectorXd z = (one * w).array().tanh();
  const double gate = 1.0 / (1.0 + std::exp(-one.row(0).dot(z)));
  CHECK(model.attention_pool(t2, t2.constant(one)).value().isApprox(gate * one));

  Matrix xp(3, 16);
  xp << x.row(2), x.row(0), x.row(1);
  CHECK(model.attention_pool(t2, t2.constant(x)).value().isApprox(model.attention_pool(t2, t2.constant(xp)).value(), 1e-14));

  ModelConfig mean_cfg = small_config();
  mean_cfg.sub_attention_off = true;
  const PSimGnn mean_model(mean_cfg);
  CHECK(mean_model.attention_pool(t, t.constant(x)).value().isApprox(x.colwise().mean()));
  CHECK_THROWS_AS(model.attention_pool(t, t.constant(Matrix(0, 16))), ArgumentError);
}

TEST_CASE("select_top_m") {
  Matrix s(2, 2);
  s << 0.9, 0.1, 0.5, 0.9;
  CHECK(select_top_m(s, 0).empty());
  CHECK(select_top_m(s, 2) == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(select_top_m(s, 4) == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {1, 0}, {0, 1}});
  CHECK_THROWS_AS(select_top_m(s, 5), ArgumentError);
  CHECK_THROWS_AS(select_top_m(s, -1), ArgumentError);
}

TEST_CASE("coarse scores") {
  const PSimGnn model(small_config());
  const Graph g = generate_ba(30, 1, 8, "g");
  const auto p = fluidc(g, 3, 1);
  Tape t(false);
  const Matrix c = model.coarse_scores(t, p.subgraphs, p.subgraphs).value();
  REQUIRE(c.cols() == 9);
  for (int i = 0; i < 3; ++i) CHECK(c(0, i * 3 + i) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((c.array().abs() <= 1.0 + 1e-12).all());
  std::vector<InducedSubgraph> two(p.subgraphs.begin(), p.subgraphs.begin() + 2);
  CHECK_THROWS_AS(model.coarse_scores(t, two, p.subgraphs), ArgumentError);
}

TEST_CASE("matcher behavior") {
  const PSimGnn model(small_config());
  ModelConfig uniform_cfg = small_config();
  uniform_cfg.cross_attention_off = true;
  const PSimGnn uniform(uniform_cfg);
  Tape t(false);
  const Graph a = generate_ba(6, 1, 1, "a");
  const Graph b = generate_ba(5, 1, 2, "b");
  Rng rng(1);
  const Var h1 = t.constant(opcat::random_matrix(6, 16, rng));
  // Equal rows in h2 make the attention of h1 nodes uniform.
  const Var h2 = t.constant(Matrix::Ones(5, 16) * 0.3);
  const auto [x1, x2] = model.propagation_step(t, h1, h2, a, b);
  const auto [y1, y2] = uniform.propagation_step(t, h1, h2, a, b);
  CHECK(x1.value().isApprox(y1.value(), 1e-12));
  CHECK_FALSE(x2.value().isApprox(y2.value(), 1e-6));
  CHECK_THROWS_AS(model.propagation_step(t, t.constant(Matrix::Ones(6, 3)), h2, a, b), ArgumentError);

  SUBCASE("isolated node without cross messages sees only itself") {
    ModelConfig cfg = small_config();
    cfg.cross_messages_off = true;
    PSimGnn iso(cfg);
    const Graph single("s", 1, {});
    const Var h = t.constant(Matrix::Constant(1, 16, 0.2));
    const auto [n1, n2] = iso.propagation_step(t, h, h2, single, b);
    Tape u(false);
    ParameterSet& ps = iso.parameters();
    Mlp2 update{{&ps.at("matcher.update.l1.w"), &ps.at("matcher.update.l1.b")},
                &ps.at("matcher.update.l1.slope"),
                {&ps.at("matcher.update.l2.w"), &ps.at("matcher.update.l2.b")}};
    const Matrix expected =
        update(u, u.constant((Matrix(1, 48) << Matrix::Constant(1, 16, 0.2), Matrix::Zero(1, 32)).finished()))
            .value();
    CHECK(n1.value().isApprox(expected, 1e-14));
  }
}

TEST_CASE("aggregation is permutation invariant") {
  const PSimGnn model(small_config());
  Rng rng(12);
  const Matrix h = opcat::random_matrix(7, 16, rng);
  Matrix hp = h;
  hp.row(0).swap(hp.row(6));
  hp.row(2).swap(hp.row(3));
  Tape t(false);
  CHECK(model.aggregate_matched(t, t.constant(h)).value().isApprox(model.aggregate_matched(t, t.constant(hp)).value(),
                                                                    1e-13));
}

TEST_CASE("fine scores") {
  const PSimGnn model(small_config());
  const Graph a = generate_ba(8, 1, 1, "a");
  const Graph b = generate_ba(7, 1, 2, "b");
  Tape t(false);
  ForwardStats stats;
  CHECK(model.fine_score(t, a, a, &stats).scalar() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats.propagation_steps == 3);
  CHECK(stats.fine_pairs == 1);
  const double ab = model.fine_score(t, a, b).scalar();
  CHECK(ab == doctest::Approx(model.fine_score(t, b, a).scalar()).epsilon(1e-12));
  CHECK(ab >= -1.0);
  CHECK(ab <= 1.0);
}

TEST_CASE("fuse") {
  const PSimGnn model(small_config());
  Tape t(false);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const double y = model.fuse(t, t.constant(opcat::random_matrix(1, 9, rng)), t.constant(opcat::random_matrix(1, 9, rng))).scalar();
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
  CHECK_THROWS_AS(model.fuse(t, t.constant(Matrix::Zero(1, 8)), t.constant(Matrix::Zero(1, 9))), ArgumentError);
  CHECK_THROWS_AS(model.fuse(t, t.constant(Matrix::Zero(1, 9)), t.constant(Matrix::Zero(1, 3))), ArgumentError);
  const PSimGnn up(small_config(0));
  CHECK_NOTHROW(up.fuse(t, t.constant(Matrix::Zero(1, 9)), Var{}));
}

TEST_CASE("forward invariants") {
  const Graph g1 = generate_ba(40, 1, 21, "g1");
  const Graph g2 = generate_ba(36, 1, 22, "g2");
  const auto p1 = fluidc(g1, 3, 1);
  const auto p2 = fluidc(g2, 3, 2);
  Rng rng(6);
  for (int m : {0, 3, 9}) {
    CAPTURE(m);
    const PSimGnn model(small_config(m));
    ForwardStats stats;
    const double s = score(model, p1, p2, &stats);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(stats.propagation_steps == static_cast<std::size_t>(m * 3));
    CHECK(stats.fine_pairs == static_cast<std::size_t>(m));
    CHECK(score(model, p2, p1) == doctest::Approx(s).epsilon(1e-9));
    const auto [h1, q1] = permuted(g1, p1, rng);
    const auto [h2, q2] = permuted(g2, p2, rng);
    CHECK(std::abs(score(model, q1, q2) - s) < 1e-9);
  }
  const PSimGnn other_k(ModelConfig{.k = 2, .m = 4});
  Tape t(false);
  CHECK_THROWS_AS(other_k.forward(t, p1, p2), ArgumentError);
}

TEST_CASE("batched forward equals per-pair forward") {
  std::vector<Graph> graphs;
  std::vector<PartitionResult> parts;
  for (int i = 0; i < 4; ++i) graphs.push_back(generate_ba(15 + 3 * i, 1, 100 + i, "g" + std::to_string(i)));
  for (int i = 0; i < 4; ++i) parts.push_back(fluidc(graphs[i], 3, i));
  std::vector<PairPartitions> pairs;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) pairs.push_back({&parts[i], &parts[j]});
  }
  for (int m : {0, 4, 9}) {
    for (bool uniform : {false, true}) {
      ModelConfig cfg = small_config(m);
      cfg.cross_attention_off = uniform;
      cfg.sub_attention_off = uniform;
      const PSimGnn model(cfg);
      Tape t(false);
      ForwardStats batch_stats;
      const Matrix batched = model.forward_batch(t, pairs, &batch_stats).value();
      REQUIRE(batched.rows() == 16);
      ForwardStats pair_stats;
      for (std::size_t b = 0; b < pairs.size(); ++b) {
        CHECK(std::abs(batched(static_cast<Eigen::Index>(b), 0) -
                       score(model, *pairs[b].first, *pairs[b].second, &pair_stats)) < 1e-12);
      }
      CHECK(batch_stats.propagation_steps == pair_stats.propagation_steps);
    }
  }
  const PSimGnn model(small_config());
  Tape t;
  CHECK_THROWS_AS(model.forward_batch(t, std::span<const PairPartitions>{}), ArgumentError);
}

TEST_CASE("identity pair with identical partitions has a unit coarse diagonal") {
  const PSimGnn model(small_config());
  const Graph g = generate_ba(25, 1, 3, "g");
  const auto p = fluidc(g, 3, 4);
  Tape t(false);
  const Matrix c = model.coarse_scores(t, p.subgraphs, p.subgraphs).value();
  CHECK(c(0, 0) == doctest::Approx(1.0));
  CHECK(c(0, 4) == doctest::Approx(1.0));
  CHECK(c(0, 8) == doctest::Approx(1.0));
}

TEST_CASE("gradients reach every parameter group on a 60-node pair") {
  PSimGnn model(small_config());
  const Graph g1 = generate_ba(60, 1, 1, "a");
  const Graph g2 = generate_ba(60, 1, 2, "b");
  const auto p1 = fluidc(g1, 3, 3);
  const auto p2 = fluidc(g2, 3, 4);
  model.parameters().zero_grad();
  {
    Tape t;
    t.backward(model.forward(t, p1, p2));
  }
  std::map<std::string, double> group_norm;
  for (const auto* p : model.parameters().all()) {
    CHECK(p->grad.allFinite());
    group_norm[PSimGnn::group_of(p->name)] += p->grad.norm();
  }
  for (const auto& [group, norm] : group_norm) {
    CAPTURE(group);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("small full-model gradient check") {
  ModelConfig cfg;
  cfg.gin_dims = {4, 3};
  cfg.matcher_dim = 3;
  cfg.fusion_dim = 4;
  cfg.rounds = 2;
  cfg.m = 9;
  cfg.init_seed = 3;
  PSimGnn model(cfg);
  Rng jitter(4);
  model.parameters().perturb(0.1, jitter);
  const Graph g1 = generate_ba(8, 1, 5, "a");
  const Graph g2 = generate_ba(7, 1, 6, "b");
  const auto p1 = fluidc(g1, 3, 1);
  const auto p2 = fluidc(g2, 3, 2);
  auto f = [&](Tape& t) { return model.forward(t, p1, p2); };
  const auto all = model.parameters().all();
  const auto report = grad_check(f, all, 1e-5, 1e-6);
  CAPTURE(report.worst_parameter);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("training on identity pairs drives their score toward 1") {
  PSimGnn model(small_config(3));
  std::vector<Graph> graphs;
  std::vector<PartitionResult> parts;
  for (int i = 0; i < 3; ++i) graphs.push_back(generate_ba(12, 1, 50 + i, "g" + std::to_string(i)));
  for (int i = 0; i < 3; ++i) parts.push_back(fluidc(graphs[i], 3, i));
  std::vector<PairPartitions> pairs;
  for (const auto& p : parts) pairs.push_back({&p, &p});
  AdamState adam;
  adam.learning_rate = 0.01;
  const auto all = model.parameters().all();
  for (int step = 0; step < 150; ++step) {
    Tape t;
    const Var y = model.forward_batch(t, pairs);
    const Var diff = sub(y, t.constant(Matrix::Ones(3, 1)));
    t.backward(sum(mul(diff, diff)));
    adam_step(all, adam);
  }
  for (const auto& p : parts) CHECK(score(model, p, p) > 0.95);
}

TEST_CASE("partition cache") {
  PartitionCache cache(3);
  const Graph g = generate_ba(20, 1, 1, "g");
  const auto& a = cache.get(g, 7);
  const auto& b = cache.get(g, 8);  // cached by id
  CHECK(&a == &b);
  CHECK(a.seed == 7);
  CHECK_THROWS_AS(cache.get(Graph("tiny", 2, {{0, 1}}), 1), ArgumentError);
}
