#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace psim {

using NodeId = std::int32_t;

/// Undirected edge in canonical orientation (u < v).
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  auto operator<=>(const Edge&) const = default;
};

/// Dense per-node feature matrix, rows indexed by node id.
using NodeFeatures = Eigen::MatrixXd;

/// Undirected simple graph on nodes 0..n-1 with optional string labels.
///
/// Construction validates the edge list (no self-loops, no duplicates, ids in
/// range) and throws DataError naming the offending edge. Edges are stored
/// canonically (u < v, sorted) and adjacency is kept in CSR form, so the
/// object is immutable and cheap to share across threads.
class Graph {
 public:
  Graph(std::string id, std::size_t node_count, std::vector<Edge> edges,
        std::vector<std::string> labels = {});

  const std::string& id() const noexcept { return id_; }
  Graph with_id(std::string id) const;

  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::span<const Edge> edges() const noexcept { return edges_; }

  /// Sorted neighbor list of `v`.
  std::span<const NodeId> neighbors(NodeId v) const;
  std::size_t degree(NodeId v) const;
  bool has_edge(NodeId u, NodeId v) const;

  /// True when at least one node carries a non-empty label.
  bool labeled() const noexcept { return labeled_; }
  /// Label of `v`; empty for unlabeled nodes.
  const std::string& label(NodeId v) const;
  std::span<const std::string> labels() const noexcept { return labels_; }

  /// Structural equality: id, node count, edge set and labels.
  bool operator==(const Graph& other) const;

 private:
  std::string id_;
  std::size_t node_count_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_;
  std::vector<NodeId> adjacency_;
  std::vector<std::string> labels_;
  bool labeled_ = false;
};

/// Parses the JSON graph format
/// `{"id": str, "n": int, "edges": [[u,v],...], "labels": {"<id>": str}?}`.
/// Errors carry the JSON location of the offending element.
Graph load_graph(std::string_view json_text);
Graph load_graph_file(const std::filesystem::path& path);

/// Serializes with edges as [u, v], u < v, sorted; labels only when present.
std::string save_graph(const Graph& g);
void save_graph_file(const Graph& g, const std::filesystem::path& path);

bool is_connected(const Graph& g);

/// Induced subgraph plus the id mapping between it and its parent.
struct InducedSubgraph {
  Graph graph;
  /// to_parent[new_id] = old_id; new ids follow ascending old id.
  std::vector<NodeId> to_parent;

  /// New id of `old_id`, or -1 if the node is not part of the subgraph.
  NodeId from_parent(NodeId old_id) const;
};

/// Subgraph induced by `nodes` (any order, no duplicates), relabeled
/// 0..|nodes|-1 in ascending parent-id order.
InducedSubgraph induced_subgraph(const Graph& g, std::span<const NodeId> nodes,
                                 std::string id = {});

/// n x dim matrix filled with `value`.
NodeFeatures constant_features(const Graph& g, double value, int dim);

}  // namespace psim
