#pragma once

// Slow, definition-level reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psim/graph.hpp"
#include "psim/random.hpp"

namespace oracle {

using psim::Graph;
using psim::NodeId;

/// Unit-cost edit cost of the path induced by a partial injective map
/// g1 -> g2 (-1 = deleted), counted operation by operation.
inline int edit_cost(const Graph& g1, const Graph& g2, const std::vector<int>& f) {
  const auto n2 = static_cast<int>(g2.node_count());
  std::vector<int> inverse(static_cast<std::size_t>(n2), -1);
  int cost = 0;
  for (std::size_t u = 0; u < f.size(); ++u) {
    if (f[u] < 0) {
      ++cost;  // delete node
    } else {
      inverse[static_cast<std::size_t>(f[u])] = static_cast<int>(u);
      if (g1.label(static_cast<NodeId>(u)) != g2.label(f[u])) ++cost;  // relabel
    }
  }
  for (int x = 0; x < n2; ++x) {
    if (inverse[static_cast<std::size_t>(x)] < 0) ++cost;  // insert node
  }
  for (const auto& e : g1.edges()) {
    const int a = f[static_cast<std::size_t>(e.u)], b = f[static_cast<std::size_t>(e.v)];
    if (a < 0 || b < 0 || !g2.has_edge(a, b)) ++cost;  // delete edge
  }
  for (const auto& e : g2.edges()) {
    const int a = inverse[static_cast<std::size_t>(e.u)], b = inverse[static_cast<std::size_t>(e.v)];
    if (a < 0 || b < 0 || !g1.has_edge(a, b)) ++cost;  // insert edge
  }
  return cost;
}

/// Minimum edit cost over every partial injective node map.
inline int brute_force_ged(const Graph& g1, const Graph& g2) {
  const auto n1 = g1.node_count();
  const auto n2 = static_cast<int>(g2.node_count());
  std::vector<int> f(n1, -1);
  std::vector<bool> used(static_cast<std::size_t>(n2), false);
  int best = std::numeric_limits<int>::max();
  auto rec = [&](auto&& self, std::size_t u) -> void {
    if (u == n1) {
      best = std::min(best, edit_cost(g1, g2, f));
      return;
    }
    f[u] = -1;
    self(self, u + 1);
    for (int x = 0; x < n2; ++x) {
      if (used[static_cast<std::size_t>(x)]) continue;
      used[static_cast<std::size_t>(x)] = true;
      f[u] = x;
      self(self, u + 1);
      used[static_cast<std::size_t>(x)] = false;
    }
    f[u] = -1;
  };
  rec(rec, 0);
  return best;
}

/// Minimum over all permutations; +inf entries are never chosen if avoidable.
inline double brute_force_assignment(const Eigen::MatrixXd& c) {
  std::vector<int> p(static_cast<std::size_t>(c.rows()));
  std::iota(p.begin(), p.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += c(static_cast<Eigen::Index>(i), p[i]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

/// Random simple graph on n nodes with each edge present with probability p.
inline Graph random_graph(std::size_t n, double p, psim::Rng& rng, std::string id = "r") {
  std::bernoulli_distribution coin(p);
  std::vector<psim::Edge> edges;
  for (NodeId u = 0; u < static_cast<NodeId>(n); ++u) {
    for (NodeId v = u + 1; v < static_cast<NodeId>(n); ++v) {
      if (coin(rng)) edges.push_back({u, v});
    }
  }
  return Graph(std::move(id), n, std::move(edges));
}

/// Random connected graph: a random spanning tree plus extra random edges.
inline Graph random_connected_graph(std::size_t n, double extra, psim::Rng& rng, std::string id = "c") {
  std::set<psim::Edge> edges;
  for (NodeId v = 1; v < static_cast<NodeId>(n); ++v) {
    const auto u = static_cast<NodeId>(psim::uniform_index(rng, static_cast<std::size_t>(v)));
    edges.insert({u, v});
  }
  std::bernoulli_distribution coin(extra);
  for (NodeId u = 0; u < static_cast<NodeId>(n); ++u) {
    for (NodeId v = u + 1; v < static_cast<NodeId>(n); ++v) {
      if (coin(rng)) edges.insert({u, v});
    }
  }
  return Graph(std::move(id), n, {edges.begin(), edges.end()});
}

/// Same graph with node v renamed perm[v].
inline Graph relabel(const Graph& g, const std::vector<NodeId>& perm, std::string id) {
  std::vector<psim::Edge> edges;
  for (const auto& e : g.edges()) {
    NodeId a = perm[static_cast<std::size_t>(e.u)], b = perm[static_cast<std::size_t>(e.v)];
    if (a > b) std::swap(a, b);
    edges.push_back({a, b});
  }
  std::vector<std::string> labels;
  if (g.labeled()) {
    labels.resize(g.node_count());
    for (std::size_t v = 0; v < g.node_count(); ++v) {
      labels[static_cast<std::size_t>(perm[v])] = g.label(static_cast<NodeId>(v));
    }
  }
  return Graph(std::move(id), g.node_count(), std::move(edges), std::move(labels));
}

/// Rank of each value: (# smaller) + (# equal + 1) / 2, by direct counting.
inline std::vector<double> counting_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double y : x) {
      if (y < x[i]) ++less;
      if (y == x[i]) ++equal;
    }
    r[i] = static_cast<double>(less) + static_cast<double>(equal + 1) / 2.0;
  }
  return r;
}

/// Linear (Pearson) correlation written out from its definition.
inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return correlation(counting_ranks(a), counting_ranks(b));
}

/// Kendall tau-b by counting every pair.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0, pairs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      ++pairs;
      const bool tx = x[i] == x[j];
      const bool ty = y[i] == y[j];
      if (tx) ++ties_x;
      if (ty) ++ties_y;
      if (tx || ty) continue;
      if ((x[i] < x[j]) == (y[i] < y[j])) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  const double a = static_cast<double>(pairs - ties_x);
  const double b = static_cast<double>(pairs - ties_y);
  if (a == 0 || b == 0) return 0.0;
  return static_cast<double>(concordant - discordant) / std::sqrt(a * b);
}

/// |top-k(pred) intersect top-k(truth)| / k with ties ordered by id.
inline double precision_at_k(const std::vector<double>& pred, const std::vector<double>& truth,
                             const std::vector<std::string>& ids, std::size_t k) {
  auto top = [&](const std::vector<double>& s) {
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (s[a] != s[b]) return s[a] > s[b];
      return ids[a] < ids[b];
    });
    return std::set<std::size_t>(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  };
  const auto a = top(pred), b = top(truth);
  std::size_t common = 0;
  for (auto i : a) common += b.count(i);
  return static_cast<double>(common) / static_cast<double>(k);
}

}  // namespace oracle
