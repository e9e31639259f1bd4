#include "psim/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "psim/error.hpp"
#include "psim/optim.hpp"
#include "psim/parallel.hpp"
#include "psim/random.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "train-eval";

std::vector<std::size_t> indices_of(const DatasetManifest& manifest,
                                    const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(manifest.index_of(id));
  std::sort(out.begin(), out.end());
  return out;
}

const PartitionResult& partition_of(PartitionCache& cache, const DatasetManifest& manifest,
                                    std::size_t index) {
  const auto& d = manifest.graphs[index];
  return cache.get(d.graph, d.partition_seed);
}

std::vector<double> targets_of(const DatasetManifest& manifest, const std::vector<PairIndex>& pairs) {
  std::vector<double> t;
  t.reserve(pairs.size());
  for (const auto& [i, j] : pairs) t.push_back(manifest.pair(i, j).sim);
  return t;
}

constexpr std::size_t kInferenceChunk = 64;

std::vector<PairPartitions> pair_refs(PartitionCache& cache, const DatasetManifest& manifest,
                                      const std::vector<PairIndex>& pairs, std::size_t begin,
                                      std::size_t end) {
  std::vector<PairPartitions> refs;
  refs.reserve(end - begin);
  for (std::size_t p = begin; p < end; ++p) {
    refs.push_back({&partition_of(cache, manifest, pairs[p].first),
                    &partition_of(cache, manifest, pairs[p].second)});
  }
  return refs;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

PartitionCache build_partitions(const DatasetManifest& manifest, int k, int threads) {
  std::vector<PartitionResult> results(manifest.graphs.size());
  parallel_for(manifest.graphs.size(), threads, [&](std::size_t i) {
    const auto& d = manifest.graphs[i];
    if (static_cast<std::size_t>(k) > d.graph.node_count()) {
      throw ArgumentError(kModule, "graph '" + d.graph.id() + "' has fewer than k = " +
                                       std::to_string(k) + " nodes");
    }
    results[i] = fluidc(d.graph, k, d.partition_seed);
  });
  PartitionCache cache(k);
  for (std::size_t i = 0; i < results.size(); ++i) {
    cache.put(manifest.graphs[i].graph.id(), std::move(results[i]));
  }
  return cache;
}

std::vector<PairIndex> training_pairs(const DatasetManifest& manifest) {
  const auto train = indices_of(manifest, manifest.splits.train);
  std::vector<PairIndex> pairs;
  pairs.reserve(train.size() * train.size());
  for (std::size_t i : train) {
    for (std::size_t j : train) pairs.emplace_back(i, j);
  }
  return pairs;
}

std::vector<PairIndex> query_pairs(const DatasetManifest& manifest,
                                   const std::vector<std::string>& queries) {
  std::vector<std::string> database = manifest.splits.train;
  database.insert(database.end(), manifest.splits.val.begin(), manifest.splits.val.end());
  const auto db = indices_of(manifest, database);
  std::vector<PairIndex> pairs;
  for (std::size_t q : indices_of(manifest, queries)) {
    for (std::size_t j : db) {
      if (j != q) pairs.emplace_back(q, j);
    }
  }
  return pairs;
}

std::vector<PairIndex> subsample_pairs(std::vector<PairIndex> pairs, std::size_t cap,
                                       std::uint64_t seed) {
  if (cap == 0 || pairs.size() <= cap) return pairs;
  Rng rng(seed);
  std::shuffle(pairs.begin(), pairs.end(), rng);
  pairs.resize(cap);
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

Var mse_loss(Tape& tape, Var predictions, std::span<const double> targets) {
  if (targets.empty()) throw ArgumentError(kModule, "mse_loss: empty batch");
  if (predictions.cols() != 1 || predictions.rows() != static_cast<Eigen::Index>(targets.size())) {
    throw ArgumentError(kModule, "mse_loss: " + std::to_string(predictions.rows()) + "x" +
                                     std::to_string(predictions.cols()) + " predictions for " +
                                     std::to_string(targets.size()) + " targets");
  }
  Matrix t(static_cast<Eigen::Index>(targets.size()), 1);
  for (std::size_t i = 0; i < targets.size(); ++i) t(static_cast<Eigen::Index>(i), 0) = targets[i];
  Var diff = sub(predictions, tape.constant(std::move(t)));
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(targets.size()));
}

Var mse_loss(Tape& tape, std::span<const Var> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw ArgumentError(kModule, "mse_loss: empty batch");
  std::vector<Var> columns(predictions.begin(), predictions.end());
  return mse_loss(tape, transpose(concat_cols(std::span<const Var>(columns))), targets);
}

std::vector<double> predict(const PSimGnn& model, const DatasetManifest& manifest,
                            PartitionCache& partitions, const std::vector<PairIndex>& pairs,
                            int threads, ForwardStats* stats) {
  // Fill the cache up front so workers only read it.
  for (const auto& [i, j] : pairs) {
    partition_of(partitions, manifest, i);
    partition_of(partitions, manifest, j);
  }
  const std::size_t chunks = (pairs.size() + kInferenceChunk - 1) / kInferenceChunk;
  std::vector<double> out(pairs.size());
  std::vector<ForwardStats> per_chunk(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kInferenceChunk;
    const std::size_t end = std::min(pairs.size(), begin + kInferenceChunk);
    const auto refs = pair_refs(partitions, manifest, pairs, begin, end);
    Tape tape(false);
    const Matrix scores = model.forward_batch(tape, refs, &per_chunk[c]).value();
    for (std::size_t p = begin; p < end; ++p) out[p] = scores(static_cast<Eigen::Index>(p - begin), 0);
  });
  if (stats) {
    for (const auto& s : per_chunk) {
      stats->propagation_steps += s.propagation_steps;
      stats->fine_pairs += s.fine_pairs;
    }
  }
  return out;
}

TrainResult train_on_pairs(PSimGnn& model, const DatasetManifest& manifest,
                           PartitionCache& partitions, const std::vector<PairIndex>& train_set,
                           const std::vector<PairIndex>& val_set, const TrainConfig& config,
                           const std::function<void(const HistoryRow&)>& on_validation) {
  if (config.batch_size == 0 || config.iterations == 0 || config.validate_every == 0 ||
      !(config.learning_rate > 0.0)) {
    throw ArgumentError(kModule, "batch size, iterations, cadence and learning rate must be positive");
  }
  if (train_set.empty()) throw DataError(kModule, "no training pairs");
  if (val_set.empty()) throw DataError(kModule, "no validation pairs");

  const auto val_targets = targets_of(manifest, val_set);
  auto params = model.parameters().all();
  AdamState adam;
  adam.learning_rate = config.learning_rate;
  Rng rng(config.seed);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best = model.parameters().snapshot();

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    std::vector<PairIndex> batch;
    batch.reserve(config.batch_size);
    while (batch.size() < std::min(config.batch_size, train_set.size())) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(train_set[order[cursor++]]);
    }

    Tape tape;
    const auto refs = pair_refs(partitions, manifest, batch, 0, batch.size());
    Var predictions = model.forward_batch(tape, refs);
    const auto targets = targets_of(manifest, batch);
    Var loss = mse_loss(tape, predictions, targets);
    model.parameters().zero_grad();
    tape.backward(loss);
    adam_step(params, adam);

    HistoryRow row{it, loss.scalar(), std::numeric_limits<double>::quiet_NaN()};
    if (it % config.validate_every == 0 || it == config.iterations) {
      const auto preds = predict(model, manifest, partitions, val_set, config.threads);
      row.val_loss = mse(preds, val_targets);
      result.final_val_loss = row.val_loss;
      if (row.val_loss < result.best_val_loss) {
        result.best_val_loss = row.val_loss;
        result.best_iteration = it;
        best = model.parameters().snapshot();
      }
      if (on_validation) on_validation(row);
    }
    result.history.push_back(row);
  }
  model.parameters().restore(best);
  return result;
}

TrainResult train(PSimGnn& model, const DatasetManifest& manifest, PartitionCache& partitions,
                  const TrainConfig& config,
                  const std::function<void(const HistoryRow&)>& on_validation) {
  if (manifest.splits.train.empty() || manifest.splits.val.empty()) {
    throw DataError(kModule, "dataset '" + manifest.name + "' lacks a train or val split");
  }
  auto val = subsample_pairs(query_pairs(manifest, manifest.splits.val), config.validation_cap,
                             derive_seed(config.seed, 0x7a1));
  return train_on_pairs(model, manifest, partitions, training_pairs(manifest), val, config,
                        on_validation);
}

std::string history_to_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream out;
  out << "iteration,train_loss,val_loss\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << format_double(r.train_loss) << ',';
    if (!std::isnan(r.val_loss)) out << format_double(r.val_loss);
    out << '\n';
  }
  return out.str();
}

EvalReport evaluate(const PSimGnn& model, const DatasetManifest& manifest,
                    PartitionCache& partitions, const std::vector<std::size_t>& ks, int threads) {
  if (manifest.splits.test.empty()) throw DataError(kModule, "dataset has no test split");
  const auto pairs = query_pairs(manifest, manifest.splits.test);
  if (pairs.empty()) throw DataError(kModule, "no test pairs");
  const auto targets = targets_of(manifest, pairs);

  const auto start = std::chrono::steady_clock::now();
  const auto preds = predict(model, manifest, partitions, pairs, threads);
  const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;

  EvalReport report;
  report.pair_count = pairs.size();
  report.ms_per_pair = elapsed.count() / static_cast<double>(pairs.size());
  report.regression = regression_metrics(preds, targets);

  const auto train = training_pairs(manifest);
  double mean = 0.0;
  for (double t : targets_of(manifest, train)) mean += t;
  mean /= static_cast<double>(train.size());
  for (double t : targets) report.baseline_mse += (t - mean) * (t - mean);
  report.baseline_mse /= static_cast<double>(targets.size());

  std::vector<QueryRanking> queries;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [q, j] = pairs[p];
    const std::string& qid = manifest.graphs[q].graph.id();
    if (queries.empty() || queries.back().query != qid) queries.push_back({qid, {}, {}, {}});
    auto& entry = queries.back();
    entry.ids.push_back(manifest.graphs[j].graph.id());
    entry.predicted.push_back(preds[p]);
    entry.truth.push_back(targets[p]);
  }
  std::vector<std::size_t> usable;
  for (std::size_t k : ks) {
    if (k >= 1 && k <= queries.front().ids.size()) usable.push_back(k);
  }
  report.ranking = ranking_metrics(queries, usable);
  report.query_count = queries.size();
  return report;
}

std::string eval_report_to_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "metric,value,units\n";
  out << "mse," << format_double(r.regression.mse * 100.0) << ",1e-2\n";
  out << "mae," << format_double(r.regression.mae * 100.0) << ",1e-2\n";
  out << "baseline_mse," << format_double(r.baseline_mse * 100.0) << ",1e-2\n";
  out << "rho," << format_double(r.ranking.rho) << ",per-query mean\n";
  out << "tau," << format_double(r.ranking.tau) << ",per-query mean\n";
  for (const auto& [k, p] : r.ranking.p_at_k) {
    out << "p@" << k << ',' << format_double(p) << ",per-query mean\n";
  }
  out << "ms_per_pair," << format_double(r.ms_per_pair) << ",ms\n";
  out << "pairs," << r.pair_count << ",count\n";
  out << "queries," << r.query_count << ",count\n";
  return out.str();
}

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json doc;
  doc["mse"] = r.regression.mse;
  doc["mae"] = r.regression.mae;
  doc["baseline_mse"] = r.baseline_mse;
  doc["rho"] = r.ranking.rho;
  doc["tau"] = r.ranking.tau;
  nlohmann::ordered_json pk = nlohmann::ordered_json::object();
  for (const auto& [k, p] : r.ranking.p_at_k) pk[std::to_string(k)] = p;
  doc["p_at_k"] = pk;
  doc["ranking_averaging"] = "per-query";
  doc["ms_per_pair"] = r.ms_per_pair;
  doc["pairs"] = r.pair_count;
  doc["queries"] = r.query_count;
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (const auto& q : r.ranking.per_query) {
    nlohmann::ordered_json e;
    e["query"] = q.query;
    e["rho"] = q.rho;
    e["tau"] = q.tau;
    nlohmann::ordered_json qk = nlohmann::ordered_json::object();
    for (const auto& [k, p] : q.p_at_k) qk[std::to_string(k)] = p;
    e["p_at_k"] = qk;
    per.push_back(e);
  }
  doc["per_query"] = per;
  return doc.dump(1);
}

double bench_timing(const std::function<void(std::size_t)>& body, std::size_t count,
                    std::size_t repetitions) {
  if (count == 0) throw ArgumentError(kModule, "bench_timing: no items");
  if (repetitions == 0) throw ArgumentError(kModule, "bench_timing: repetitions must be >= 1");
  for (std::size_t i = 0; i < count; ++i) body(i);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < repetitions; ++r) {
    for (std::size_t i = 0; i < count; ++i) body(i);
  }
  const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - start;
  return elapsed.count() / static_cast<double>(count * repetitions);
}

}  // namespace psim
