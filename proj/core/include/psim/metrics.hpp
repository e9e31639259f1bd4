#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace psim {

/// Mean of squared differences. ArgumentError on empty or unequal input.
double mse(std::span<const double> predictions, std::span<const double> targets);

struct RegressionMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

RegressionMetrics regression_metrics(std::span<const double> predictions,
                                     std::span<const double> targets);

/// 1-based ranks in ascending value order; tied values share their average
/// rank.
std::vector<double> average_ranks(std::span<const double> values);

/// sum((x - mean x)(y - mean y)) / sqrt(sum((x - mean x)^2) sum((y - mean y)^2)),
/// 0 when either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of the average-rank vectors.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Pair counts behind Kendall's tau-b.
struct KendallCounts {
  std::int64_t pairs = 0;           // n (n - 1) / 2
  std::int64_t ties_x = 0;          // pairs tied in x
  std::int64_t ties_y = 0;          // pairs tied in y
  std::int64_t concordant_minus_discordant = 0;
};

/// Counts in O(n log n) by sorting on x and merge-counting inversions in y.
KendallCounts kendall_counts(std::span<const double> x, std::span<const double> y);

/// (C - D) / sqrt((n0 - n1)(n0 - n2)), 0 when either side is constant.
double kendall_tau_b(const KendallCounts& counts);
double kendall_tau_b(std::span<const double> x, std::span<const double> y);

/// Indices of the k highest scores; equal scores are ordered by `ids`
/// ascending.
std::vector<std::size_t> top_k(std::span<const double> scores,
                               std::span<const std::string> ids, std::size_t k);

/// |predicted top-k intersect true top-k| / k. ArgumentError unless
/// 1 <= k <= size.
double precision_at_k(std::span<const double> predicted, std::span<const double> truth,
                      std::span<const std::string> ids, std::size_t k);

/// One query scored against a database. Higher means more similar in both
/// score vectors.
struct QueryRanking {
  std::string query;
  std::vector<std::string> ids;
  std::vector<double> predicted;
  std::vector<double> truth;
};

struct QueryMetrics {
  std::string query;
  double rho = 0.0;
  double tau = 0.0;
  std::map<std::size_t, double> p_at_k;
};

struct RankingMetrics {
  double rho = 0.0;
  double tau = 0.0;
  std::map<std::size_t, double> p_at_k;
  std::vector<QueryMetrics> per_query;
};

QueryMetrics query_metrics(const QueryRanking& query, std::span<const std::size_t> ks);

/// Per-query metrics averaged over all queries.
RankingMetrics ranking_metrics(std::span<const QueryRanking> queries,
                               std::span<const std::size_t> ks);

}  // namespace psim
