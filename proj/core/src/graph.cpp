#include "psim/graph.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <queue>

#include "json.hpp"
#include "psim/error.hpp"
#include "psim/io.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "graph-core";

std::string edge_text(std::size_t index, NodeId u, NodeId v) {
  return "edges[" + std::to_string(index) + "] = [" + std::to_string(u) +
         "," + std::to_string(v) + "]";
}

}  // namespace

Graph::Graph(std::string id, std::size_t node_count, std::vector<Edge> edges,
             std::vector<std::string> labels)
    : id_(std::move(id)), node_count_(node_count), labels_(std::move(labels)) {
  if (node_count_ < 1) throw DataError(kModule, "graph must have n >= 1");
  const auto n = static_cast<NodeId>(node_count_);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto& e = edges[i];
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
      throw DataError(kModule, edge_text(i, e.u, e.v) +
                                   ": node id out of range 0.." +
                                   std::to_string(n - 1));
    }
    if (e.u == e.v) {
      throw DataError(kModule, edge_text(i, e.u, e.v) + ": self-loop");
    }
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  // Stable sort keeps the first occurrence's index recoverable for messages.
  std::vector<std::size_t> order(edges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return edges[a] < edges[b];
  });
  edges_.reserve(edges.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Edge& e = edges[order[k]];
    if (!edges_.empty() && edges_.back() == e) {
      throw DataError(kModule,
                      edge_text(order[k], e.u, e.v) + ": duplicate edge");
    }
    edges_.push_back(e);
  }

  if (labels_.empty()) {
    labels_.assign(node_count_, std::string{});
  } else if (labels_.size() != node_count_) {
    throw DataError(kModule, "label count " + std::to_string(labels_.size()) +
                                 " does not match n = " +
                                 std::to_string(node_count_));
  }
  labeled_ = std::any_of(labels_.begin(), labels_.end(),
                         [](const std::string& s) { return !s.empty(); });

  offsets_.assign(node_count_ + 1, 0);
  for (const auto& e : edges_) {
    ++offsets_[e.u + 1];
    ++offsets_[e.v + 1];
  }
  for (std::size_t v = 0; v < node_count_; ++v) offsets_[v + 1] += offsets_[v];
  adjacency_.resize(2 * edges_.size());
  auto cursor = offsets_;
  for (const auto& e : edges_) {
    adjacency_[cursor[e.u]++] = e.v;
    adjacency_[cursor[e.v]++] = e.u;
  }
  for (std::size_t v = 0; v < node_count_; ++v) {
    std::sort(adjacency_.begin() + offsets_[v],
              adjacency_.begin() + offsets_[v + 1]);
  }
}

Graph Graph::with_id(std::string id) const {
  Graph copy = *this;
  copy.id_ = std::move(id);
  return copy;
}

std::span<const NodeId> Graph::neighbors(NodeId v) const {
  const auto i = static_cast<std::size_t>(v);
  return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
}

std::size_t Graph::degree(NodeId v) const {
  const auto i = static_cast<std::size_t>(v);
  return offsets_[i + 1] - offsets_[i];
}

bool Graph::has_edge(NodeId u, NodeId v) const {
  const auto nbrs = neighbors(u);
  return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

const std::string& Graph::label(NodeId v) const {
  return labels_[static_cast<std::size_t>(v)];
}

bool Graph::operator==(const Graph& other) const {
  return id_ == other.id_ && node_count_ == other.node_count_ &&
         edges_ == other.edges_ && labels_ == other.labels_;
}

Graph load_graph(std::string_view json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(kModule, std::string("malformed graph document: ") + e.what());
  }
  if (!doc.is_object()) throw DataError(kModule, "graph document must be an object");

  std::string id;
  if (auto it = doc.find("id"); it != doc.end()) {
    if (!it->is_string()) throw DataError(kModule, "\"id\" must be a string");
    id = it->get<std::string>();
  }
  auto n_it = doc.find("n");
  if (n_it == doc.end() || !n_it->is_number_integer()) {
    throw DataError(kModule, "\"n\" must be present and an integer");
  }
  const auto n = n_it->get<std::int64_t>();
  if (n < 1 || n > std::numeric_limits<NodeId>::max()) {
    throw DataError(kModule, "\"n\" = " + std::to_string(n) + " is out of range");
  }

  std::vector<Edge> edges;
  auto e_it = doc.find("edges");
  if (e_it == doc.end() || !e_it->is_array()) {
    throw DataError(kModule, "\"edges\" must be present and an array");
  }
  edges.reserve(e_it->size());
  for (std::size_t i = 0; i < e_it->size(); ++i) {
    const auto& pair = (*e_it)[i];
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number_integer()) {
      throw DataError(kModule, "edges[" + std::to_string(i) +
                                   "]: expected a pair of integers");
    }
    const auto u = pair[0].get<std::int64_t>();
    const auto v = pair[1].get<std::int64_t>();
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw DataError(kModule, "edges[" + std::to_string(i) + "] = [" +
                                   std::to_string(u) + "," + std::to_string(v) +
                                   "]: node id out of range 0.." +
                                   std::to_string(n - 1));
    }
    edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(v)});
  }

  std::vector<std::string> labels;
  if (auto l_it = doc.find("labels"); l_it != doc.end() && !l_it->is_null()) {
    if (!l_it->is_object()) throw DataError(kModule, "\"labels\" must be an object");
    labels.assign(static_cast<std::size_t>(n), std::string{});
    for (const auto& [key, value] : l_it->items()) {
      std::int64_t node = -1;
      auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), node);
      if (ec != std::errc{} || ptr != key.data() + key.size() || node < 0 ||
          node >= n) {
        throw DataError(kModule, "labels[\"" + key + "\"]: invalid node id");
      }
      if (!value.is_string()) {
        throw DataError(kModule, "labels[\"" + key + "\"]: label must be a string");
      }
      labels[static_cast<std::size_t>(node)] = value.get<std::string>();
    }
  }
  return Graph(std::move(id), static_cast<std::size_t>(n), std::move(edges),
               std::move(labels));
}

Graph load_graph_file(const std::filesystem::path& path) {
  try {
    return load_graph(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(kModule, path.string() + ": " + e.what());
  }
}

std::string save_graph(const Graph& g) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["id"] = g.id();
  doc["n"] = g.node_count();
  auto edges = ordered_json::array();
  for (const auto& e : g.edges()) edges.push_back({e.u, e.v});
  doc["edges"] = std::move(edges);
  if (g.labeled()) {
    ordered_json labels = ordered_json::object();
    for (std::size_t v = 0; v < g.node_count(); ++v) {
      const auto& l = g.label(static_cast<NodeId>(v));
      if (!l.empty()) labels[std::to_string(v)] = l;
    }
    doc["labels"] = std::move(labels);
  }
  return doc.dump();
}

void save_graph_file(const Graph& g, const std::filesystem::path& path) {
  write_text_file_atomic(path, save_graph(g) + "\n");
}

bool is_connected(const Graph& g) {
  std::vector<char> seen(g.node_count(), 0);
  std::vector<NodeId> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (NodeId w : g.neighbors(v)) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  return reached == g.node_count();
}

NodeId InducedSubgraph::from_parent(NodeId old_id) const {
  auto it = std::lower_bound(to_parent.begin(), to_parent.end(), old_id);
  if (it == to_parent.end() || *it != old_id) return -1;
  return static_cast<NodeId>(it - to_parent.begin());
}

InducedSubgraph induced_subgraph(const Graph& g, std::span<const NodeId> nodes,
                                 std::string id) {
  if (nodes.empty()) throw ArgumentError(kModule, "induced_subgraph: empty node set");
  std::vector<NodeId> sorted(nodes.begin(), nodes.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<NodeId>(g.node_count());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] < 0 || sorted[i] >= n) {
      throw ArgumentError(kModule, "induced_subgraph: node " +
                                       std::to_string(sorted[i]) + " out of range");
    }
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      throw ArgumentError(kModule, "induced_subgraph: node " +
                                       std::to_string(sorted[i]) + " repeated");
    }
  }
  std::vector<NodeId> local(g.node_count(), -1);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    local[static_cast<std::size_t>(sorted[i])] = static_cast<NodeId>(i);
  }
  std::vector<Edge> edges;
  std::vector<std::string> labels;
  if (g.labeled()) labels.reserve(sorted.size());
  for (NodeId old_u : sorted) {
    const NodeId new_u = local[static_cast<std::size_t>(old_u)];
    for (NodeId old_v : g.neighbors(old_u)) {
      const NodeId new_v = local[static_cast<std::size_t>(old_v)];
      if (new_v > new_u) edges.push_back({new_u, new_v});
    }
    if (g.labeled()) labels.push_back(g.label(old_u));
  }
  if (id.empty()) id = g.id();
  return {Graph(std::move(id), sorted.size(), std::move(edges), std::move(labels)),
          std::move(sorted)};
}

NodeFeatures constant_features(const Graph& g, double value, int dim) {
  if (dim < 1) throw ArgumentError(kModule, "constant_features: dim must be >= 1");
  return NodeFeatures::Constant(static_cast<Eigen::Index>(g.node_count()), dim, value);
}

}  // namespace psim
