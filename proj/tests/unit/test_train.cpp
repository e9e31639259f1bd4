#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

#include "psim/error.hpp"
#include "psim/train.hpp"

using namespace psim;

namespace {

const DatasetManifest& tiny_dataset() {
  static const DatasetManifest manifest = [] {
    BaDatasetOptions o;
    o.n = 12;
    o.basics = 2;
    o.trims_per_basic = 9;
    o.min_ged = 1;
    o.max_ged = 5;
    o.seed = 11;
    o.ground_truth.beam_width = 20;
    return build_ba_dataset(o);
  }();
  return manifest;
}

ModelConfig tiny_model(int m = 3) {
  ModelConfig c;
  c.m = m;
  c.gin_dims = {8, 8};
  c.matcher_dim = 8;
  c.rounds = 2;
  c.init_seed = 1;
  return c;
}

}  // namespace

TEST_CASE("pair sets follow the split conventions") {
  const auto& m = tiny_dataset();
  REQUIRE(m.graphs.size() == 20);
  const auto train = training_pairs(m);
  CHECK(train.size() == m.splits.train.size() * m.splits.train.size());
  std::set<std::string> train_ids(m.splits.train.begin(), m.splits.train.end());
  for (const auto& [i, j] : train) {
    CHECK(train_ids.count(m.graphs[i].graph.id()) == 1);
    CHECK(train_ids.count(m.graphs[j].graph.id()) == 1);
  }
  const auto test = query_pairs(m, m.splits.test);
  CHECK(test.size() == m.splits.test.size() * (m.splits.train.size() + m.splits.val.size()));
  std::set<std::string> test_ids(m.splits.test.begin(), m.splits.test.end());
  for (const auto& [q, j] : test) {
    CHECK(q != j);
    CHECK(test_ids.count(m.graphs[q].graph.id()) == 1);
    CHECK(test_ids.count(m.graphs[j].graph.id()) == 0);
  }
  const auto val = query_pairs(m, m.splits.val);
  for (const auto& [q, j] : val) CHECK(q != j);

  const auto sub = subsample_pairs(train, 10, 4);
  CHECK(sub.size() == 10);
  CHECK(std::is_sorted(sub.begin(), sub.end()));
  CHECK(sub == subsample_pairs(train, 10, 4));
  CHECK(subsample_pairs(train, 0, 4).size() == train.size());
}

TEST_CASE("mse_loss value and gradient") {
  ParameterSet ps;
  Parameter& p = ps.add("p", (Matrix(3, 1) << 0.5, 0.2, 0.9).finished());
  const std::vector<double> targets{0.4, 0.2, 1.0};
  Tape t;
  const Var loss = mse_loss(t, t.parameter(p), targets);
  CHECK(loss.scalar() == doctest::Approx((0.01 + 0.0 + 0.01) / 3));
  t.backward(loss);
  CHECK(p.grad(0, 0) == doctest::Approx(2 * 0.1 / 3));
  CHECK(p.grad(2, 0) == doctest::Approx(-2 * 0.1 / 3));

  Tape u;
  std::vector<Var> parts{u.constant(Matrix::Constant(1, 1, 0.5)), u.constant(Matrix::Constant(1, 1, 0.2)),
                         u.constant(Matrix::Constant(1, 1, 0.9))};
  CHECK(mse_loss(u, parts, targets).scalar() == doctest::Approx(loss.scalar()));
  CHECK_THROWS_AS(mse_loss(u, u.constant(Matrix::Zero(2, 1)), targets), ArgumentError);
  CHECK_THROWS_AS(mse_loss(u, u.constant(Matrix::Zero(0, 1)), std::vector<double>{}), ArgumentError);
}

TEST_CASE("training improves validation loss and restores the best snapshot") {
  const auto& m = tiny_dataset();
  PSimGnn model(tiny_model());
  PartitionCache parts = build_partitions(m, 3);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.iterations = 60;
  cfg.validate_every = 20;
  cfg.learning_rate = 5e-3;
  cfg.seed = 2;
  std::size_t callbacks = 0;
  const auto result = train(model, m, parts, cfg, [&](const HistoryRow&) { ++callbacks; });
  CHECK(callbacks == 3);
  REQUIRE(result.history.size() == 60);
  CHECK(std::isnan(result.history[0].val_loss));
  CHECK_FALSE(std::isnan(result.history[19].val_loss));
  CHECK(result.best_val_loss <= result.final_val_loss);
  CHECK(result.best_iteration % 20 == 0);

  const auto val = query_pairs(m, m.splits.val);
  const auto preds = predict(model, m, parts, val);
  std::vector<double> targets;
  for (const auto& [i, j] : val) targets.push_back(m.pair(i, j).sim);
  CHECK(mse(preds, targets) == doctest::Approx(result.best_val_loss).epsilon(1e-12));

  // The initial untrained loss is worse than the best one.
  PSimGnn fresh(tiny_model());
  const auto initial = predict(fresh, m, parts, val);
  CHECK(mse(initial, targets) > result.best_val_loss);

  const std::string csv = history_to_csv(result.history);
  CHECK(csv.rfind("iteration,train_loss,val_loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 61);
}

TEST_CASE("training is deterministic") {
  const auto& m = tiny_dataset();
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.iterations = 10;
  cfg.validate_every = 5;
  cfg.seed = 9;
  auto run = [&] {
    PSimGnn model(tiny_model());
    PartitionCache parts = build_partitions(m, 3);
    train(model, m, parts, cfg);
    return model.parameters().snapshot();
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("training argument checks") {
  const auto& m = tiny_dataset();
  PSimGnn model(tiny_model());
  PartitionCache parts = build_partitions(m, 3);
  TrainConfig cfg;
  cfg.iterations = 0;
  CHECK_THROWS_AS(train(model, m, parts, cfg), ArgumentError);
  cfg.iterations = 1;
  CHECK_THROWS_AS(train_on_pairs(model, m, parts, {}, training_pairs(m), cfg), DataError);
}

TEST_CASE("predict is independent of thread count and chunking") {
  const auto& m = tiny_dataset();
  const PSimGnn model(tiny_model(9));
  PartitionCache parts = build_partitions(m, 3, 2);
  std::vector<PairIndex> all;
  for (std::size_t i = 0; i < m.graphs.size(); ++i) {
    for (std::size_t j = 0; j < m.graphs.size(); ++j) all.emplace_back(i, j);
  }
  ForwardStats stats;
  const auto one = predict(model, m, parts, all, 1, &stats);
  const auto four = predict(model, m, parts, all, 4);
  CHECK(one == four);
  CHECK(stats.propagation_steps == all.size() * 9 * 2);
  for (double s : one) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("evaluate and report formats") {
  const auto& m = tiny_dataset();
  const PSimGnn model(tiny_model());
  PartitionCache parts = build_partitions(m, 3);
  const auto report = evaluate(model, m, parts, {5, 10, 100});
  CHECK(report.query_count == m.splits.test.size());
  CHECK(report.pair_count == m.splits.test.size() * (m.splits.train.size() + m.splits.val.size()));
  CHECK(report.ranking.p_at_k.count(5) == 1);
  CHECK(report.ranking.p_at_k.count(100) == 0);
  CHECK(report.baseline_mse > 0.0);
  CHECK(report.ms_per_pair >= 0.0);

  const std::string csv = eval_report_to_csv(report);
  CHECK(csv.rfind("metric,value,units\n", 0) == 0);
  CHECK(csv.find("\nmse,") != std::string::npos);
  CHECK(csv.find(",1e-2\n") != std::string::npos);
  CHECK(csv.find("p@5,") != std::string::npos);

  const auto doc = nlohmann::json::parse(eval_report_to_json(report));
  CHECK(doc["mse"].get<double>() == doctest::Approx(report.regression.mse));
  CHECK(doc["ranking_averaging"] == "per-query");
  CHECK(doc["per_query"].size() == report.query_count);
}

TEST_CASE("bench_timing") {
  std::size_t calls = 0;
  const double ms = bench_timing([&](std::size_t) { ++calls; }, 10, 3);
  CHECK(calls == 40);
  CHECK(ms >= 0.0);
  CHECK(ms < 1.0);
  CHECK_THROWS_AS(bench_timing([](std::size_t) {}, 0, 1), ArgumentError);
  CHECK_THROWS_AS(bench_timing([](std::size_t) {}, 1, 0), ArgumentError);
}
