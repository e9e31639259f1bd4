#include "psim/ged.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <string>

#include "psim/error.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "ged-classical";

/// Search space shared by A* and beam search: g1 nodes are decided one at a
/// time in a fixed order, each either matched to an unused g2 node or
/// deleted; unused g2 nodes are inserted once every g1 node is decided.
class MappingSearch {
 public:
  struct State {
    std::vector<NodeId> target;  // by g1 node id; -1 deleted or undecided
    std::vector<NodeId> source;  // by g2 node id; -1 unused
    std::vector<int> used_labels;
    int depth = 0;
    int deleted = 0;
    int used = 0;
    int used_edges = 0;  // g2 edges with both endpoints used
    double g = 0.0;
    double f = 0.0;
  };

  struct Child {
    NodeId target;
    double g;
    double f;
  };

  MappingSearch(const Graph& g1, const Graph& g2, const EditCostModel& cost)
      : g1_(g1), g2_(g2), cost_(cost), n1_(static_cast<int>(g1.node_count())),
        n2_(static_cast<int>(g2.node_count())), prune_(cost.substitution_dominates()) {
    intern_labels();
    build_order();
    adj2_.assign(static_cast<std::size_t>(n2_) * n2_, 0);
    for (const auto& e : g2_.edges()) {
      adj2_[idx2(e.u, e.v)] = 1;
      adj2_[idx2(e.v, e.u)] = 1;
    }
    adj1_.assign(static_cast<std::size_t>(n1_) * n1_, 0);
    for (const auto& e : g1_.edges()) {
      adj1_[static_cast<std::size_t>(e.u) * n1_ + e.v] = 1;
      adj1_[static_cast<std::size_t>(e.v) * n1_ + e.u] = 1;
    }
  }

  int depth_limit() const { return n1_; }

  State root() const {
    State s;
    s.target.assign(static_cast<std::size_t>(n1_), -1);
    s.source.assign(static_cast<std::size_t>(n2_), -1);
    s.used_labels.assign(label_count_, 0);
    s.f = lower_bound(0, 0, static_cast<int>(g2_.edge_count()), s.used_labels, -1);
    return s;
  }

  /// Feasible children of `s` in a deterministic order (targets ascending,
  /// deletion last).
  template <class Visit>
  void for_each_child(const State& s, Visit&& visit) const {
    const NodeId u = order_[static_cast<std::size_t>(s.depth)];
    const bool can_map = s.used < n2_;
    bool can_delete = true;
    if (prune_) {
      can_delete = s.deleted < std::max(0, n1_ - n2_);
    }
    if (can_map) {
      for (NodeId t = 0; t < n2_; ++t) {
        if (s.source[static_cast<std::size_t>(t)] >= 0) continue;
        visit(evaluate(s, u, t));
      }
    }
    if (can_delete || !can_map) visit(evaluate(s, u, -1));
  }

  State expand(const State& s, const Child& c) const {
    State out = s;
    const NodeId u = order_[static_cast<std::size_t>(s.depth)];
    out.depth = s.depth + 1;
    out.g = c.g;
    out.f = c.f;
    if (c.target < 0) {
      ++out.deleted;
      return out;
    }
    out.target[static_cast<std::size_t>(u)] = c.target;
    out.source[static_cast<std::size_t>(c.target)] = u;
    ++out.used;
    out.used_edges += used_neighbors(s, c.target);
    if (label_count_ > 0) ++out.used_labels[static_cast<std::size_t>(label2_[static_cast<std::size_t>(c.target)])];
    return out;
  }

  NodeMapping mapping(const State& s) const { return NodeMapping{s.target}; }

 private:
  std::size_t idx2(NodeId a, NodeId b) const {
    return static_cast<std::size_t>(a) * static_cast<std::size_t>(n2_) + static_cast<std::size_t>(b);
  }
  bool adj1(NodeId a, NodeId b) const {
    return adj1_[static_cast<std::size_t>(a) * n1_ + b] != 0;
  }

  void intern_labels() {
    if (!g1_.labeled() && !g2_.labeled()) return;
    std::map<std::string, int> ids;
    auto id_of = [&](const std::string& l) {
      auto [it, inserted] = ids.emplace(l, static_cast<int>(ids.size()));
      return it->second;
    };
    label1_.resize(static_cast<std::size_t>(n1_));
    label2_.resize(static_cast<std::size_t>(n2_));
    for (NodeId v = 0; v < n1_; ++v) label1_[static_cast<std::size_t>(v)] = id_of(g1_.label(v));
    for (NodeId v = 0; v < n2_; ++v) label2_[static_cast<std::size_t>(v)] = id_of(g2_.label(v));
    label_count_ = ids.size();
    total_labels2_.assign(label_count_, 0);
    for (int l : label2_) ++total_labels2_[static_cast<std::size_t>(l)];
  }

  /// Greedy connectivity-first order: start from a highest-degree node, then
  /// repeatedly take the node with most already-ordered neighbors.
  void build_order() {
    std::vector<char> placed(static_cast<std::size_t>(n1_), 0);
    std::vector<int> links(static_cast<std::size_t>(n1_), 0);
    order_.reserve(static_cast<std::size_t>(n1_));
    for (int step = 0; step < n1_; ++step) {
      NodeId best = -1;
      for (NodeId v = 0; v < n1_; ++v) {
        if (placed[static_cast<std::size_t>(v)]) continue;
        if (best < 0) {
          best = v;
          continue;
        }
        const auto lv = links[static_cast<std::size_t>(v)], lb = links[static_cast<std::size_t>(best)];
        if (lv > lb || (lv == lb && g1_.degree(v) > g1_.degree(best))) best = v;
      }
      placed[static_cast<std::size_t>(best)] = 1;
      order_.push_back(best);
      for (NodeId w : g1_.neighbors(best)) ++links[static_cast<std::size_t>(w)];
    }
    position_.assign(static_cast<std::size_t>(n1_), 0);
    for (int i = 0; i < n1_; ++i) position_[static_cast<std::size_t>(order_[static_cast<std::size_t>(i)])] = i;

    // Per-depth suffix statistics for the lower bound.
    remaining_edges1_.assign(static_cast<std::size_t>(n1_) + 1, 0);
    for (const auto& e : g1_.edges()) {
      const int last = std::max(position_[static_cast<std::size_t>(e.u)], position_[static_cast<std::size_t>(e.v)]);
      // The edge has an undecided endpoint at every depth <= last.
      for (int d = 0; d <= last; ++d) ++remaining_edges1_[static_cast<std::size_t>(d)];
    }
    if (label_count_ > 0) {
      remaining_labels1_.assign((static_cast<std::size_t>(n1_) + 1) * label_count_, 0);
      for (int d = n1_ - 1; d >= 0; --d) {
        for (std::size_t l = 0; l < label_count_; ++l) {
          remaining_labels1_[static_cast<std::size_t>(d) * label_count_ + l] =
              remaining_labels1_[static_cast<std::size_t>(d + 1) * label_count_ + l];
        }
        const int l = label1_[static_cast<std::size_t>(order_[static_cast<std::size_t>(d)])];
        ++remaining_labels1_[static_cast<std::size_t>(d) * label_count_ + static_cast<std::size_t>(l)];
      }
    }
  }

  int used_neighbors(const State& s, NodeId t) const {
    int count = 0;
    for (NodeId q : g2_.neighbors(t)) count += s.source[static_cast<std::size_t>(q)] >= 0;
    return count;
  }

  /// Admissible bound on the cost of completing a state at `depth` with
  /// `used` g2 nodes consumed and `used_edges` g2 edges fully inside them.
  /// `extra_label` is the label of a g2 node being consumed by the child
  /// under evaluation, or -1.
  double lower_bound(int depth, int used, int used_edges, const std::vector<int>& used_labels,
                     int extra_label) const {
    const int r1 = n1_ - depth;
    const int r2 = n2_ - used;
    const int s = std::min(r1, r2);
    int common = s;
    if (label_count_ > 0) {
      common = 0;
      for (std::size_t l = 0; l < label_count_; ++l) {
        const int left2 = total_labels2_[l] - used_labels[l] -
                          (static_cast<int>(l) == extra_label ? 1 : 0);
        common += std::min(remaining_labels1_[static_cast<std::size_t>(depth) * label_count_ + l], left2);
      }
    }
    double bound = (r1 - s) * cost_.node_delete + (r2 - s) * cost_.node_insert +
                   (s - common) * std::min(cost_.node_relabel, cost_.node_delete + cost_.node_insert);
    const int e1 = remaining_edges1_[static_cast<std::size_t>(depth)];
    const int e2 = static_cast<int>(g2_.edge_count()) - used_edges;
    bound += e1 > e2 ? (e1 - e2) * cost_.edge_delete : (e2 - e1) * cost_.edge_insert;
    return bound;
  }

  Child evaluate(const State& s, NodeId u, NodeId t) const {
    double step = t >= 0 ? cost_.node_substitute(g1_, u, g2_, t) : cost_.node_delete;
    for (NodeId p : g1_.neighbors(u)) {
      if (position_[static_cast<std::size_t>(p)] >= s.depth) continue;
      const NodeId q = s.target[static_cast<std::size_t>(p)];
      step += (t >= 0 && q >= 0 && adj2_[idx2(t, q)]) ? cost_.edge_substitute : cost_.edge_delete;
    }
    int new_used_edges = s.used_edges;
    int extra_label = -1;
    if (t >= 0) {
      for (NodeId q : g2_.neighbors(t)) {
        const NodeId p = s.source[static_cast<std::size_t>(q)];
        if (p < 0) continue;
        ++new_used_edges;
        if (!adj1(u, p)) step += cost_.edge_insert;
      }
      if (label_count_ > 0) extra_label = label2_[static_cast<std::size_t>(t)];
    }
    const double g = s.g + step;
    const double h = lower_bound(s.depth + 1, s.used + (t >= 0 ? 1 : 0), new_used_edges,
                                 s.used_labels, extra_label);
    return {t, g, g + h};
  }

  const Graph& g1_;
  const Graph& g2_;
  const EditCostModel& cost_;
  int n1_;
  int n2_;
  bool prune_;
  std::vector<NodeId> order_;
  std::vector<int> position_;
  std::vector<char> adj1_;
  std::vector<char> adj2_;
  std::vector<int> remaining_edges1_;
  std::size_t label_count_ = 0;
  std::vector<int> label1_, label2_, total_labels2_, remaining_labels1_;
};

NodeMapping invert(const NodeMapping& m, std::size_t n2) {
  NodeMapping out{std::vector<NodeId>(n2, -1)};
  for (std::size_t u = 0; u < m.target.size(); ++u) {
    if (m.target[u] >= 0) out.target[static_cast<std::size_t>(m.target[u])] = static_cast<NodeId>(u);
  }
  return out;
}

/// Runs `oriented` in both argument orders and keeps the cheaper result,
/// expressing its mapping from g1 to g2.
template <class Oriented>
GedResult symmetrized(const Graph& g1, const Graph& g2, Oriented&& oriented) {
  GedResult forward = oriented(g1, g2);
  GedResult backward = oriented(g2, g1);
  if (backward.value < forward.value) {
    backward.mapping = invert(*backward.mapping, g1.node_count());
    return backward;
  }
  return forward;
}

GedResult beam_oriented(const Graph& g1, const Graph& g2, const EditCostModel& cost,
                        std::size_t width) {
  MappingSearch search(g1, g2, cost);
  using State = MappingSearch::State;
  struct Candidate {
    std::size_t parent;
    MappingSearch::Child child;
  };
  std::vector<State> frontier{search.root()};
  std::vector<Candidate> candidates;
  for (int depth = 0; depth < search.depth_limit(); ++depth) {
    candidates.clear();
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      search.for_each_child(frontier[i], [&](const MappingSearch::Child& c) {
        candidates.push_back({i, c});
      });
    }
    // Lower f first; ties keep generation order so the result is deterministic.
    auto better = [](const Candidate& a, const Candidate& b) {
      if (a.child.f != b.child.f) return a.child.f < b.child.f;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.child.target < b.child.target;
    };
    if (candidates.size() > width) {
      std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(width),
                       candidates.end(), better);
      candidates.resize(width);
    }
    std::sort(candidates.begin(), candidates.end(), better);
    std::vector<State> next;
    next.reserve(candidates.size());
    for (const auto& c : candidates) next.push_back(search.expand(frontier[c.parent], c.child));
    frontier = std::move(next);
  }
  // At full depth the bound equals the exact completion cost.
  const State& best = frontier.front();
  return {best.f, GedMethod::kBeam, search.mapping(best)};
}

}  // namespace

const char* to_string(GedMethod method) noexcept {
  switch (method) {
    case GedMethod::kExactAstar:
      return "exact_astar";
    case GedMethod::kHungarian:
      return "hungarian";
    case GedMethod::kVj:
      return "vj";
    case GedMethod::kBeam:
      return "beam";
    case GedMethod::kTrimBound:
      return "trim_bound";
  }
  return "unknown";
}

GedMethod parse_ged_method(std::string_view name) {
  if (name == "exact" || name == "exact_astar") return GedMethod::kExactAstar;
  if (name == "hungarian") return GedMethod::kHungarian;
  if (name == "vj") return GedMethod::kVj;
  if (name == "beam") return GedMethod::kBeam;
  if (name == "trim_bound") return GedMethod::kTrimBound;
  throw ArgumentError(kModule, "unknown GED method '" + std::string(name) + "'");
}

double edit_path_cost_from_mapping(const Graph& g1, const Graph& g2, const NodeMapping& mapping,
                                   const EditCostModel& cost) {
  const auto n1 = g1.node_count();
  const auto n2 = g2.node_count();
  if (mapping.target.size() != n1) {
    throw ArgumentError(kModule, "mapping size " + std::to_string(mapping.target.size()) +
                                     " does not match n1 = " + std::to_string(n1));
  }
  std::vector<NodeId> source(n2, -1);
  double total = 0.0;
  for (std::size_t u = 0; u < n1; ++u) {
    const NodeId t = mapping.target[u];
    if (t < 0) {
      total += cost.node_delete;
      continue;
    }
    if (static_cast<std::size_t>(t) >= n2) {
      throw ArgumentError(kModule, "mapping target " + std::to_string(t) + " out of range");
    }
    if (source[static_cast<std::size_t>(t)] >= 0) {
      throw ArgumentError(kModule, "mapping is not injective: g2 node " + std::to_string(t) +
                                       " has two preimages");
    }
    source[static_cast<std::size_t>(t)] = static_cast<NodeId>(u);
    total += cost.node_substitute(g1, static_cast<NodeId>(u), g2, t);
  }
  for (std::size_t v = 0; v < n2; ++v) {
    if (source[v] < 0) total += cost.node_insert;
  }
  for (const auto& e : g1.edges()) {
    const NodeId a = mapping.target[static_cast<std::size_t>(e.u)];
    const NodeId b = mapping.target[static_cast<std::size_t>(e.v)];
    total += (a >= 0 && b >= 0 && g2.has_edge(a, b)) ? cost.edge_substitute : cost.edge_delete;
  }
  for (const auto& e : g2.edges()) {
    const NodeId a = source[static_cast<std::size_t>(e.u)];
    const NodeId b = source[static_cast<std::size_t>(e.v)];
    if (a < 0 || b < 0 || !g1.has_edge(a, b)) total += cost.edge_insert;
  }
  return total;
}

GedResult exact_ged_astar(const Graph& g1, const Graph& g2, const EditCostModel& cost,
                          const ExactGedOptions& options) {
  if (g1.node_count() > options.node_limit || g2.node_count() > options.node_limit) {
    throw ArgumentError(kModule, "exact GED limited to " + std::to_string(options.node_limit) +
                                     " nodes, got " + std::to_string(g1.node_count()) + " and " +
                                     std::to_string(g2.node_count()));
  }
  const auto started = std::chrono::steady_clock::now();
  MappingSearch search(g1, g2, cost);
  using State = MappingSearch::State;

  std::vector<State> states{search.root()};
  struct Entry {
    double f;
    int depth;
    std::size_t index;
  };
  // Lowest f first, deeper states first on ties, then insertion order.
  auto worse = [](const Entry& a, const Entry& b) {
    if (a.f != b.f) return a.f > b.f;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index > b.index;
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(worse)> open(worse);
  open.push({states[0].f, 0, 0});
  std::size_t expansions = 0;
  while (!open.empty()) {
    const Entry top = open.top();
    open.pop();
    if (top.depth == search.depth_limit()) {
      const State& goal = states[top.index];
      return {goal.f, GedMethod::kExactAstar, search.mapping(goal)};
    }
    if (options.timeout.count() > 0 && (++expansions & 1023U) == 0 &&
        std::chrono::steady_clock::now() - started > options.timeout) {
      throw TimeoutError(kModule, "exact GED exceeded " + std::to_string(options.timeout.count()) +
                                      " ms after " + std::to_string(expansions) + " expansions");
    }
    const State parent = states[top.index];
    search.for_each_child(parent, [&](const MappingSearch::Child& c) {
      states.push_back(search.expand(parent, c));
      open.push({c.f, parent.depth + 1, states.size() - 1});
    });
  }
  throw NumericError(kModule, "A* exhausted its open list without reaching a goal");
}

Eigen::MatrixXd bipartite_cost_matrix(const Graph& g1, const Graph& g2, const EditCostModel& cost) {
  const auto n1 = static_cast<Eigen::Index>(g1.node_count());
  const auto n2 = static_cast<Eigen::Index>(g2.node_count());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n1 + n2, n1 + n2);
  for (Eigen::Index i = 0; i < n1; ++i) {
    const auto di = static_cast<double>(g1.degree(static_cast<NodeId>(i)));
    for (Eigen::Index j = 0; j < n2; ++j) {
      const auto dj = static_cast<double>(g2.degree(static_cast<NodeId>(j)));
      const double edge_estimate =
          di > dj ? (di - dj) * cost.edge_delete : (dj - di) * cost.edge_insert;
      c(i, j) = cost.node_substitute(g1, static_cast<NodeId>(i), g2, static_cast<NodeId>(j)) +
                edge_estimate;
    }
    for (Eigen::Index k = 0; k < n1; ++k) {
      c(i, n2 + k) = k == i ? cost.node_delete + di * cost.edge_delete : kInf;
    }
  }
  for (Eigen::Index j = 0; j < n2; ++j) {
    const auto dj = static_cast<double>(g2.degree(static_cast<NodeId>(j)));
    for (Eigen::Index k = 0; k < n2; ++k) {
      c(n1 + k, j) = k == j ? cost.node_insert + dj * cost.edge_insert : kInf;
    }
  }
  return c;
}

GedResult bipartite_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost,
                        AssignmentSolver solver) {
  const GedMethod method =
      solver == AssignmentSolver::kHungarian ? GedMethod::kHungarian : GedMethod::kVj;
  return symmetrized(g1, g2, [&](const Graph& a, const Graph& b) {
    const Assignment assignment = solve_assignment(bipartite_cost_matrix(a, b, cost), solver);
    const auto na = a.node_count();
    const auto nb = static_cast<int>(b.node_count());
    NodeMapping mapping{std::vector<NodeId>(na, -1)};
    for (std::size_t i = 0; i < na; ++i) {
      const int col = assignment.row_to_col[i];
      if (col < nb) mapping.target[i] = static_cast<NodeId>(col);
    }
    const double value = edit_path_cost_from_mapping(a, b, mapping, cost);
    return GedResult{value, method, std::move(mapping)};
  });
}

GedResult beam_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost, std::size_t width) {
  if (width < 1) throw ArgumentError(kModule, "beam width must be >= 1");
  return symmetrized(g1, g2, [&](const Graph& a, const Graph& b) {
    return beam_oriented(a, b, cost, width);
  });
}

NormalizedGed nged_similarity(double ged, std::size_t n1, std::size_t n2) {
  if (!(ged >= 0.0)) throw ArgumentError(kModule, "GED must be non-negative");
  if (n1 < 1 || n2 < 1) throw ArgumentError(kModule, "node counts must be >= 1");
  NormalizedGed out;
  out.nged = ged / (static_cast<double>(n1 + n2) / 2.0);
  out.sim = std::exp(-out.nged);
  return out;
}

}  // namespace psim
