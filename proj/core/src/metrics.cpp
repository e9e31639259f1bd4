#include "psim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psim/error.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "train-eval";

void check_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a == 0) throw ArgumentError(kModule, std::string(what) + ": empty input");
  if (a != b) {
    throw ArgumentError(kModule, std::string(what) + ": length mismatch " + std::to_string(a) +
                                     " vs " + std::to_string(b));
  }
}

std::int64_t tied_pairs(std::int64_t run) { return run * (run - 1) / 2; }

/// Sorts `v` in place and returns the number of inversions removed.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buffer, std::size_t lo,
                         std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buffer, lo, mid) + merge_count(v, buffer, mid, hi);
  std::size_t i = lo, j = mid, out = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buffer[out++] = v[j++];
    } else {
      buffer[out++] = v[i++];
    }
  }
  while (i < mid) buffer[out++] = v[i++];
  while (j < hi) buffer[out++] = v[j++];
  std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(lo),
            buffer.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

double mse(std::span<const double> predictions, std::span<const double> targets) {
  return regression_metrics(predictions, targets).mse;
}

RegressionMetrics regression_metrics(std::span<const double> predictions,
                                     std::span<const double> targets) {
  check_aligned(predictions.size(), targets.size(), "regression_metrics");
  RegressionMetrics r;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - targets[i];
    r.mse += d * d;
    r.mae += std::abs(d);
  }
  const auto n = static_cast<double>(predictions.size());
  r.mse /= n;
  r.mae /= n;
  return r;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] == values[order[start]]) ++end;
    // Positions start..end-1 hold 1-based ranks start+1..end.
    const double rank = static_cast<double>(start + 1 + end) / 2.0;
    for (std::size_t p = start; p < end; ++p) ranks[order[p]] = rank;
    start = end;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_aligned(x.size(), y.size(), "pearson");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  check_aligned(x.size(), y.size(), "spearman_rho");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

KendallCounts kendall_counts(std::span<const double> x, std::span<const double> y) {
  check_aligned(x.size(), y.size(), "kendall_tau");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });

  KendallCounts c;
  c.pairs = tied_pairs(static_cast<std::int64_t>(n));
  std::int64_t joint_ties = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && x[order[end]] == x[order[start]]) ++end;
    c.ties_x += tied_pairs(static_cast<std::int64_t>(end - start));
    for (std::size_t s = start; s < end;) {
      std::size_t e = s + 1;
      while (e < end && y[order[e]] == y[order[s]]) ++e;
      joint_ties += tied_pairs(static_cast<std::int64_t>(e - s));
      s = e;
    }
    start = end;
  }

  std::vector<double> ys(n), buffer(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::int64_t discordant = merge_count(ys, buffer, 0, n);
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && ys[end] == ys[start]) ++end;
    c.ties_y += tied_pairs(static_cast<std::int64_t>(end - start));
    start = end;
  }
  const std::int64_t untied = c.pairs - c.ties_x - c.ties_y + joint_ties;
  c.concordant_minus_discordant = untied - 2 * discordant;
  return c;
}

double kendall_tau_b(const KendallCounts& c) {
  const double a = static_cast<double>(c.pairs - c.ties_x);
  const double b = static_cast<double>(c.pairs - c.ties_y);
  if (a == 0.0 || b == 0.0) return 0.0;
  return static_cast<double>(c.concordant_minus_discordant) / std::sqrt(a * b);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  return kendall_tau_b(kendall_counts(x, y));
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::string> ids,
                               std::size_t k) {
  if (scores.size() != ids.size()) throw ArgumentError(kModule, "top_k: ids and scores differ in length");
  if (k < 1 || k > scores.size()) {
    throw ArgumentError(kModule, "k = " + std::to_string(k) + " outside 1.." +
                                     std::to_string(scores.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  auto better = [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : ids[a] < ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

double precision_at_k(std::span<const double> predicted, std::span<const double> truth,
                      std::span<const std::string> ids, std::size_t k) {
  check_aligned(predicted.size(), truth.size(), "precision_at_k");
  auto a = top_k(predicted, ids, k);
  auto b = top_k(truth, ids, k);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(k);
}

QueryMetrics query_metrics(const QueryRanking& q, std::span<const std::size_t> ks) {
  if (q.ids.empty()) throw ArgumentError(kModule, "query '" + q.query + "': empty database");
  check_aligned(q.predicted.size(), q.truth.size(), "query_metrics");
  if (q.ids.size() != q.predicted.size()) {
    throw ArgumentError(kModule, "query '" + q.query + "': ids and scores differ in length");
  }
  QueryMetrics m;
  m.query = q.query;
  m.rho = spearman_rho(q.predicted, q.truth);
  m.tau = kendall_tau_b(q.predicted, q.truth);
  for (std::size_t k : ks) m.p_at_k[k] = precision_at_k(q.predicted, q.truth, q.ids, k);
  return m;
}

RankingMetrics ranking_metrics(std::span<const QueryRanking> queries,
                               std::span<const std::size_t> ks) {
  if (queries.empty()) throw ArgumentError(kModule, "ranking_metrics: no queries");
  RankingMetrics r;
  for (const auto& q : queries) r.per_query.push_back(query_metrics(q, ks));
  const auto n = static_cast<double>(queries.size());
  for (const auto& m : r.per_query) {
    r.rho += m.rho;
    r.tau += m.tau;
    for (const auto& [k, p] : m.p_at_k) r.p_at_k[k] += p;
  }
  r.rho /= n;
  r.tau /= n;
  for (auto& [k, p] : r.p_at_k) p /= n;
  return r;
}

}  // namespace psim
