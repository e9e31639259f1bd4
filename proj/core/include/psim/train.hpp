#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "psim/dataset.hpp"
#include "psim/metrics.hpp"
#include "psim/model.hpp"

namespace psim {

using PairIndex = std::pair<std::size_t, std::size_t>;

/// Partitions of every manifest graph with its stored partition seed.
PartitionCache build_partitions(const DatasetManifest& manifest, int k, int threads = 1);

/// Ordered pairs with both graphs in the training split.
std::vector<PairIndex> training_pairs(const DatasetManifest& manifest);
/// Ordered pairs (query, database) with the query in `queries`, the database
/// graph in train or val, and the two graphs distinct.
std::vector<PairIndex> query_pairs(const DatasetManifest& manifest,
                                   const std::vector<std::string>& queries);
/// A sorted deterministic subsample of at most `cap` pairs (cap 0 keeps all).
std::vector<PairIndex> subsample_pairs(std::vector<PairIndex> pairs, std::size_t cap,
                                       std::uint64_t seed);

/// Mean squared error recorded on `tape`, for a B x 1 column of predictions.
Var mse_loss(Tape& tape, Var predictions, std::span<const double> targets);
/// Same for separately recorded 1x1 predictions.
Var mse_loss(Tape& tape, std::span<const Var> predictions, std::span<const double> targets);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t iterations = 2000;
  double learning_rate = 1e-3;
  std::size_t validate_every = 50;
  /// Upper bound on validation pairs, 0 for all of them.
  std::size_t validation_cap = 1024;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct HistoryRow {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  /// NaN when validation did not run at this iteration.
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::size_t best_iteration = 0;
  double best_val_loss = 0.0;
  double final_val_loss = 0.0;
};

/// Training on explicit pairs; the workhorse behind train().
/// `train_set` pairs are drawn in shuffled epochs of `batch_size`; validation
/// runs every `validate_every` iterations and after the last one. The model
/// ends holding the parameters with the lowest validation loss.
TrainResult train_on_pairs(PSimGnn& model, const DatasetManifest& manifest,
                           PartitionCache& partitions, const std::vector<PairIndex>& train_set,
                           const std::vector<PairIndex>& val_set, const TrainConfig& config,
                           const std::function<void(const HistoryRow&)>& on_validation = {});

/// Trains on train x train pairs and validates on val x (train u val).
TrainResult train(PSimGnn& model, const DatasetManifest& manifest, PartitionCache& partitions,
                  const TrainConfig& config,
                  const std::function<void(const HistoryRow&)>& on_validation = {});

std::string history_to_csv(const std::vector<HistoryRow>& history);

/// Model similarity for each pair, scored with inference-only tapes.
std::vector<double> predict(const PSimGnn& model, const DatasetManifest& manifest,
                            PartitionCache& partitions, const std::vector<PairIndex>& pairs,
                            int threads = 1, ForwardStats* stats = nullptr);

struct EvalReport {
  RegressionMetrics regression;
  /// MSE of always predicting the mean training similarity.
  double baseline_mse = 0.0;
  RankingMetrics ranking;
  double ms_per_pair = 0.0;
  std::size_t pair_count = 0;
  std::size_t query_count = 0;
};

/// Test queries against the train u val database.
EvalReport evaluate(const PSimGnn& model, const DatasetManifest& manifest,
                    PartitionCache& partitions, const std::vector<std::size_t>& ks = {10, 20},
                    int threads = 1);

/// `metric,value,units` rows; MSE and MAE are reported in units of 1e-2.
std::string eval_report_to_csv(const EvalReport& report);
std::string eval_report_to_json(const EvalReport& report);

/// Mean wall-clock milliseconds per item over `repetitions` timed passes of
/// body(0..count-1), after one untimed warmup pass.
double bench_timing(const std::function<void(std::size_t)>& body, std::size_t count,
                    std::size_t repetitions = 1);

}  // namespace psim
