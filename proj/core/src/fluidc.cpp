#include "psim/fluidc.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "psim/error.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "partition-fluidc";
constexpr double kTieTolerance = 1e-9;

void validate_partition(const Graph& g,
                        const std::vector<std::vector<NodeId>>& communities) {
  std::vector<char> seen(g.node_count(), 0);
  std::size_t covered = 0;
  for (std::size_t c = 0; c < communities.size(); ++c) {
    if (communities[c].empty()) {
      throw DataError(kModule, "community " + std::to_string(c) + " is empty");
    }
    for (NodeId v : communities[c]) {
      if (v < 0 || static_cast<std::size_t>(v) >= g.node_count()) {
        throw DataError(kModule, "community " + std::to_string(c) + ": node " +
                                     std::to_string(v) + " out of range");
      }
      if (seen[static_cast<std::size_t>(v)]++) {
        throw DataError(kModule, "node " + std::to_string(v) +
                                     " appears in more than one community");
      }
      ++covered;
    }
  }
  if (covered != g.node_count()) {
    throw DataError(kModule, "partition covers " + std::to_string(covered) +
                                 " of " + std::to_string(g.node_count()) + " nodes");
  }
}

}  // namespace

std::size_t CommunityState::assigned_count() const {
  return static_cast<std::size_t>(
      std::count_if(assignment.begin(), assignment.end(), [](int c) { return c >= 0; }));
}

CommunityState CommunityState::seeded(const Graph& g, int k, Rng& rng) {
  CommunityState state;
  state.assignment.assign(g.node_count(), -1);
  state.sizes.assign(static_cast<std::size_t>(k), 1);
  std::vector<NodeId> pool(g.node_count());
  std::iota(pool.begin(), pool.end(), 0);
  // Partial Fisher-Yates: the first k slots become the seeds.
  for (int c = 0; c < k; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
    state.assignment[static_cast<std::size_t>(pool[i])] = c;
  }
  return state;
}

bool update_vertex(CommunityState& state, const Graph& g, NodeId v, Rng& rng) {
  const int k = state.community_count();
  std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
  bool any = false;
  auto accumulate = [&](NodeId w) {
    const int c = state.assignment[static_cast<std::size_t>(w)];
    if (c >= 0) {
      sums[static_cast<std::size_t>(c)] += state.density(c);
      any = true;
    }
  };
  accumulate(v);
  for (NodeId w : g.neighbors(v)) accumulate(w);
  if (!any) return false;

  const double best = *std::max_element(sums.begin(), sums.end());
  std::vector<int> candidates;
  for (int c = 0; c < k; ++c) {
    if (sums[static_cast<std::size_t>(c)] >= best - kTieTolerance) candidates.push_back(c);
  }

  const int current = state.assignment[static_cast<std::size_t>(v)];
  if (current >= 0) {
    if (std::find(candidates.begin(), candidates.end(), current) != candidates.end()) {
      return false;
    }
    if (state.sizes[static_cast<std::size_t>(current)] == 1) return false;
  }
  const int next = candidates[uniform_index(rng, candidates.size())];
  if (current >= 0) --state.sizes[static_cast<std::size_t>(current)];
  ++state.sizes[static_cast<std::size_t>(next)];
  state.assignment[static_cast<std::size_t>(v)] = next;
  return true;
}

PartitionResult fluidc(const Graph& g, int k, std::uint64_t seed, int max_sweeps) {
  if (k < 1 || static_cast<std::size_t>(k) > g.node_count()) {
    throw ArgumentError(kModule, "k = " + std::to_string(k) + " must lie in 1.." +
                                     std::to_string(g.node_count()));
  }
  if (max_sweeps < 1) throw ArgumentError(kModule, "max_sweeps must be >= 1");
  if (!is_connected(g)) {
    throw DataError(kModule, "graph '" + g.id() + "' is not connected");
  }

  Rng rng(seed);
  CommunityState state = CommunityState::seeded(g, k, rng);
  std::vector<NodeId> order(g.node_count());
  std::iota(order.begin(), order.end(), 0);

  PartitionResult result;
  result.k = k;
  result.seed = seed;
  while (result.sweeps < max_sweeps) {
    std::shuffle(order.begin(), order.end(), rng);
    bool changed = false;
    for (NodeId v : order) changed |= update_vertex(state, g, v, rng);
    ++result.sweeps;
    if (!changed) {
      result.converged = true;
      break;
    }
  }

  result.communities.assign(static_cast<std::size_t>(k), {});
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    const int c = state.assignment[v];
    // Only reachable without convergence; connected graphs are fully assigned
    // after diameter-many sweeps.
    if (c < 0) {
      throw NumericError(kModule, "node " + std::to_string(v) +
                                      " still unassigned after " +
                                      std::to_string(result.sweeps) + " sweeps");
    }
    result.communities[static_cast<std::size_t>(c)].push_back(static_cast<NodeId>(v));
  }
  result.subgraphs = extract_subgraphs(g, result.communities);
  return result;
}

std::vector<InducedSubgraph> extract_subgraphs(
    const Graph& g, const std::vector<std::vector<NodeId>>& communities) {
  validate_partition(g, communities);
  std::vector<InducedSubgraph> out;
  out.reserve(communities.size());
  for (std::size_t c = 0; c < communities.size(); ++c) {
    out.push_back(induced_subgraph(g, communities[c], g.id() + "/c" + std::to_string(c)));
  }
  return out;
}

std::string partition_to_json(const PartitionResult& p) {
  nlohmann::ordered_json doc;
  doc["k"] = p.k;
  doc["seed"] = p.seed;
  doc["communities"] = p.communities;
  return doc.dump();
}

PartitionResult partition_from_json(const Graph& g, std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
    PartitionResult p;
    p.k = doc.at("k").get<int>();
    p.seed = doc.at("seed").get<std::uint64_t>();
    p.communities = doc.at("communities").get<std::vector<std::vector<NodeId>>>();
    if (static_cast<std::size_t>(p.k) != p.communities.size()) {
      throw DataError(kModule, "\"k\" disagrees with the number of communities");
    }
    for (auto& c : p.communities) std::sort(c.begin(), c.end());
    p.subgraphs = extract_subgraphs(g, p.communities);
    p.converged = true;
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(kModule, std::string("malformed partition document: ") + e.what());
  }
}

}  // namespace psim
