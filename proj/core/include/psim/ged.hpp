#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "psim/assignment.hpp"
#include "psim/graph.hpp"

namespace psim {

/// Edit operation costs. The defaults are the unit model: every insertion and
/// deletion costs 1, relabeling a node costs 1, matching equal labels (or two
/// unlabeled nodes) and matching edges cost 0.
struct EditCostModel {
  double node_insert = 1.0;
  double node_delete = 1.0;
  double node_relabel = 1.0;
  double edge_insert = 1.0;
  double edge_delete = 1.0;
  double edge_substitute = 0.0;

  double node_substitute(const Graph& g1, NodeId u, const Graph& g2, NodeId v) const {
    return g1.label(u) == g2.label(v) ? 0.0 : node_relabel;
  }
  /// True when substituting a node or an edge is never worse than deleting
  /// and re-inserting it. Searches then skip paths that both delete and
  /// insert nodes.
  bool substitution_dominates() const {
    return node_relabel <= node_delete + node_insert &&
           edge_substitute <= edge_delete + edge_insert;
  }
};

enum class GedMethod { kExactAstar, kHungarian, kVj, kBeam, kTrimBound };

const char* to_string(GedMethod method) noexcept;
/// Accepts "exact", "exact_astar", "hungarian", "vj", "beam", "trim_bound".
GedMethod parse_ged_method(std::string_view name);

/// Node correspondence from g1 to g2. target[u] is the g2 node matched with
/// g1 node u, or -1 when u is deleted. g2 nodes outside the image are
/// inserted.
struct NodeMapping {
  std::vector<NodeId> target;
};

struct GedResult {
  double value = 0.0;
  GedMethod method = GedMethod::kExactAstar;
  std::optional<NodeMapping> mapping;
};

/// Cost of the complete edit path induced by `mapping`. Throws ArgumentError
/// if the mapping is not injective or has the wrong size.
double edit_path_cost_from_mapping(const Graph& g1, const Graph& g2,
                                   const NodeMapping& mapping,
                                   const EditCostModel& cost = {});

struct ExactGedOptions {
  std::size_t node_limit = 10;
  /// Zero disables the limit.
  std::chrono::milliseconds timeout{0};
};

/// Exact GED by A* over partial node mappings with an admissible
/// size/label/edge-count lower bound. Throws ArgumentError when either graph
/// exceeds `node_limit` and TimeoutError when the time budget runs out.
GedResult exact_ged_astar(const Graph& g1, const Graph& g2,
                          const EditCostModel& cost = {},
                          const ExactGedOptions& options = {});

/// (n1+n2) x (n1+n2) node assignment matrix with a degree-difference edge
/// estimate; forbidden entries are +inf.
Eigen::MatrixXd bipartite_cost_matrix(const Graph& g1, const Graph& g2,
                                      const EditCostModel& cost = {});

/// Assignment-based GED upper bound. Both argument orders are solved and the
/// cheaper induced edit path is reported (mapping expressed g1 -> g2).
GedResult bipartite_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost,
                        AssignmentSolver solver);

inline constexpr std::size_t kDefaultBeamWidth = 100;

/// Beam search over partial node mappings: every depth keeps the `width`
/// states with the lowest cost-so-far plus lower bound. Upper bound on GED;
/// exact when the width holds the whole frontier. Symmetrized like
/// bipartite_ged.
GedResult beam_ged(const Graph& g1, const Graph& g2, const EditCostModel& cost = {},
                   std::size_t width = kDefaultBeamWidth);

struct NormalizedGed {
  double nged = 0.0;
  /// exp(-nged), in (0, 1].
  double sim = 1.0;
};

/// nged = ged / ((n1 + n2) / 2), sim = exp(-nged).
NormalizedGed nged_similarity(double ged, std::size_t n1, std::size_t n2);

}  // namespace psim
