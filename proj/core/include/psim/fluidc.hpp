#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "psim/graph.hpp"
#include "psim/random.hpp"

namespace psim {

/// Mutable community bookkeeping for one FluidC run.
struct CommunityState {
  /// Community of each node, or -1 while unassigned.
  std::vector<int> assignment;
  /// Node count per community; every entry stays >= 1 once seeded.
  std::vector<std::size_t> sizes;

  int community_count() const noexcept { return static_cast<int>(sizes.size()); }
  /// d(c) = 1 / |c|.
  double density(int c) const { return 1.0 / static_cast<double>(sizes[static_cast<std::size_t>(c)]); }
  std::size_t assigned_count() const;

  /// Places `k` communities on `k` distinct uniformly chosen vertices.
  static CommunityState seeded(const Graph& g, int k, Rng& rng);
};

/// One application of the fluid update rule to `v`.
///
/// Candidates are the communities with maximum aggregated density over `v`
/// and its neighbors. `v` keeps its community if that is a candidate or if
/// it is the community's only member; otherwise it moves to a uniformly drawn
/// candidate. One draw is taken from `rng` per move and none otherwise. A
/// vertex whose ego network holds no assigned node stays unassigned.
/// Returns true when the assignment of `v` changed.
bool update_vertex(CommunityState& state, const Graph& g, NodeId v, Rng& rng);

struct PartitionResult {
  int k = 0;
  std::uint64_t seed = 0;
  /// k disjoint, nonempty, sorted node lists covering every node.
  std::vector<std::vector<NodeId>> communities;
  /// subgraphs[i] is the subgraph induced by communities[i].
  std::vector<InducedSubgraph> subgraphs;
  bool converged = false;
  int sweeps = 0;
};

inline constexpr int kDefaultMaxSweeps = 100;

/// Fluid Communities partition of a connected graph into `k` communities.
/// Each sweep visits all nodes in a fresh random order drawn from the seeded
/// stream; the run stops after a sweep with no change (converged) or after
/// `max_sweeps` sweeps. Deterministic in (g, k, seed).
PartitionResult fluidc(const Graph& g, int k, std::uint64_t seed,
                       int max_sweeps = kDefaultMaxSweeps);

/// Induced subgraphs for a partition, in community order. Subgraph ids are
/// "<graph id>/c<index>".
std::vector<InducedSubgraph> extract_subgraphs(
    const Graph& g, const std::vector<std::vector<NodeId>>& communities);

/// `{"k": int, "seed": int, "communities": [[ids...], ...]}`.
std::string partition_to_json(const PartitionResult& p);
/// Inverse of partition_to_json; validates the partition against `g` and
/// rebuilds the subgraphs.
PartitionResult partition_from_json(const Graph& g, std::string_view json_text);

}  // namespace psim
