#include "psim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "psim/error.hpp"
#include "psim/io.hpp"
#include "psim/parallel.hpp"
#include "psim/random.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "dataset-builder";
constexpr const char* kManifestFormat = "psimgnn-dataset/1";

/// Mutable adjacency-set graph used while trimming.
struct WorkingGraph {
  std::vector<std::set<int>> adj;
  std::vector<std::string> labels;
  std::vector<char> alive;

  explicit WorkingGraph(const Graph& g)
      : adj(g.node_count()), labels(g.labels().begin(), g.labels().end()),
        alive(g.node_count(), 1) {
    for (const auto& e : g.edges()) {
      adj[static_cast<std::size_t>(e.u)].insert(e.v);
      adj[static_cast<std::size_t>(e.v)].insert(e.u);
    }
  }

  std::vector<int> live_nodes() const {
    std::vector<int> out;
    for (std::size_t v = 0; v < alive.size(); ++v) {
      if (alive[v]) out.push_back(static_cast<int>(v));
    }
    return out;
  }

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (std::size_t v = 0; v < alive.size(); ++v) {
      if (alive[v] && adj[v].size() == 1) out.push_back(static_cast<int>(v));
    }
    return out;
  }

  std::vector<std::pair<int, int>> non_edges() const {
    std::vector<std::pair<int, int>> out;
    const auto nodes = live_nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = i + 1; j < nodes.size(); ++j) {
        if (!adj[static_cast<std::size_t>(nodes[i])].count(nodes[j])) out.emplace_back(nodes[i], nodes[j]);
      }
    }
    return out;
  }

  Graph compact(std::string id) const {
    std::vector<NodeId> remap(alive.size(), -1);
    NodeId next = 0;
    std::vector<std::string> new_labels;
    for (std::size_t v = 0; v < alive.size(); ++v) {
      if (!alive[v]) continue;
      remap[v] = next++;
      new_labels.push_back(labels[v]);
    }
    std::vector<Edge> edges;
    for (std::size_t v = 0; v < alive.size(); ++v) {
      if (!alive[v]) continue;
      for (int w : adj[v]) {
        if (static_cast<std::size_t>(w) > v) edges.push_back({remap[v], remap[static_cast<std::size_t>(w)]});
      }
    }
    return Graph(std::move(id), static_cast<std::size_t>(next), std::move(edges),
                 std::move(new_labels));
  }
};

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string zero_pad(std::size_t value, std::size_t width) {
  std::string s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Graph generate_ba(std::size_t n, std::size_t m, std::uint64_t seed, std::string id) {
  if (n < 2) throw ArgumentError(kModule, "BA graph needs n >= 2");
  if (m < 1 || m >= n) throw ArgumentError(kModule, "BA attachment m must satisfy 1 <= m < n");
  Rng rng(seed);
  std::vector<Edge> edges;
  // Each edge contributes both endpoints, so a uniform draw from this list is
  // a draw proportional to degree.
  std::vector<NodeId> endpoints;
  std::vector<NodeId> chosen;
  for (std::size_t v = m; v < n; ++v) {
    chosen.clear();
    while (chosen.size() < m) {
      NodeId t;
      if (endpoints.empty()) {
        t = static_cast<NodeId>(uniform_index(rng, v));
      } else {
        t = endpoints[uniform_index(rng, endpoints.size())];
      }
      if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) chosen.push_back(t);
    }
    for (NodeId t : chosen) {
      edges.push_back({t, static_cast<NodeId>(v)});
      endpoints.push_back(t);
      endpoints.push_back(static_cast<NodeId>(v));
    }
  }
  return Graph(std::move(id), n, std::move(edges));
}

int trim_op_cost(TrimOp op) noexcept { return op == TrimOp::kAddEdge ? 1 : 2; }

const char* to_string(TrimOp op) noexcept {
  switch (op) {
    case TrimOp::kDeleteLeaf:
      return "delete_leaf";
    case TrimOp::kAddLeaf:
      return "add_leaf";
    case TrimOp::kAddEdge:
      return "add_edge";
  }
  return "unknown";
}

DerivedGraph trim(const Graph& g, int target_ged, std::uint64_t seed, std::string id,
                  int max_attempts) {
  if (target_ged < 1) throw ArgumentError(kModule, "trim target GED must be >= 1");
  if (!is_connected(g)) throw DataError(kModule, "cannot trim disconnected graph '" + g.id() + "'");
  if (id.empty()) id = g.id() + "-t";

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    WorkingGraph w(g);
    std::vector<TrimOp> ops;
    int budget = target_ged;
    bool stuck = false;
    while (budget > 0) {
      const auto leaves = w.leaves();
      const auto live = w.live_nodes();
      const std::size_t live_edges = [&] {
        std::size_t total = 0;
        for (int v : live) total += w.adj[static_cast<std::size_t>(v)].size();
        return total / 2;
      }();
      std::vector<TrimOp> kinds;
      if (budget >= 2 && !leaves.empty()) kinds.push_back(TrimOp::kDeleteLeaf);
      if (budget >= 2) kinds.push_back(TrimOp::kAddLeaf);
      if (live_edges < live.size() * (live.size() - 1) / 2) kinds.push_back(TrimOp::kAddEdge);
      if (kinds.empty()) {
        stuck = true;
        break;
      }
      const TrimOp op = kinds[uniform_index(rng, kinds.size())];
      switch (op) {
        case TrimOp::kDeleteLeaf: {
          const int leaf = leaves[uniform_index(rng, leaves.size())];
          const int anchor = *w.adj[static_cast<std::size_t>(leaf)].begin();
          w.adj[static_cast<std::size_t>(anchor)].erase(leaf);
          w.adj[static_cast<std::size_t>(leaf)].clear();
          w.alive[static_cast<std::size_t>(leaf)] = 0;
          break;
        }
        case TrimOp::kAddLeaf: {
          const int anchor = live[uniform_index(rng, live.size())];
          const int fresh = static_cast<int>(w.adj.size());
          w.adj.emplace_back();
          w.alive.push_back(1);
          w.labels.push_back(w.labels[static_cast<std::size_t>(anchor)]);
          w.adj[static_cast<std::size_t>(anchor)].insert(fresh);
          w.adj[static_cast<std::size_t>(fresh)].insert(anchor);
          break;
        }
        case TrimOp::kAddEdge: {
          const auto candidates = w.non_edges();
          const auto [a, b] = candidates[uniform_index(rng, candidates.size())];
          w.adj[static_cast<std::size_t>(a)].insert(b);
          w.adj[static_cast<std::size_t>(b)].insert(a);
          break;
        }
      }
      ops.push_back(op);
      budget -= trim_op_cost(op);
    }
    if (stuck) continue;
    DerivedGraph out{w.compact(std::move(id)), g.id(), target_ged, std::move(ops), 0};
    return out;
  }
  throw DataError(kModule, "no feasible trim of '" + g.id() + "' with GED " +
                               std::to_string(target_ged) + " after " +
                               std::to_string(max_attempts) + " attempts");
}

const char* to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::kTrim:
      return "trim";
    case Provenance::kTrimTriangle:
      return "trim_triangle";
    case Provenance::kHungarian:
      return "hungarian";
    case Provenance::kVj:
      return "vj";
    case Provenance::kBeam:
      return "beam";
    case Provenance::kExact:
      return "exact";
  }
  return "unknown";
}

Provenance parse_provenance(std::string_view name) {
  for (auto p : {Provenance::kTrim, Provenance::kTrimTriangle, Provenance::kHungarian,
                 Provenance::kVj, Provenance::kBeam, Provenance::kExact}) {
    if (name == to_string(p)) return p;
  }
  throw DataError(kModule, "unknown provenance '" + std::string(name) + "'");
}

PairRecord ground_truth(const DerivedGraph& a, const DerivedGraph& b,
                        const GroundTruthOptions& options) {
  PairRecord record;
  record.id1 = a.graph.id();
  record.id2 = b.graph.id();
  const auto n1 = a.graph.node_count();
  const auto n2 = b.graph.node_count();
  if (record.id1 == record.id2) {
    record.ged = 0;
    record.provenance = Provenance::kExact;
    record.nged = 0.0;
    record.sim = 1.0;
    return record;
  }

  struct Candidate {
    double value;
    Provenance provenance;
  };
  std::vector<Candidate> candidates;
  if (a.root_id == b.graph.id()) candidates.push_back({double(a.trim_ged), Provenance::kTrim});
  if (b.root_id == a.graph.id()) candidates.push_back({double(b.trim_ged), Provenance::kTrim});
  if (!a.is_basic() && !b.is_basic() && a.root_id == b.root_id) {
    candidates.push_back({double(a.trim_ged + b.trim_ged), Provenance::kTrimTriangle});
  }
  candidates.push_back({bipartite_ged(a.graph, b.graph, options.cost, AssignmentSolver::kHungarian).value,
                        Provenance::kHungarian});
  candidates.push_back(
      {bipartite_ged(a.graph, b.graph, options.cost, AssignmentSolver::kJonkerVolgenant).value,
       Provenance::kVj});
  candidates.push_back(
      {beam_ged(a.graph, b.graph, options.cost, options.beam_width).value, Provenance::kBeam});

  const auto best = std::min_element(candidates.begin(), candidates.end(),
                                     [](const Candidate& x, const Candidate& y) {
                                       return x.value < y.value;
                                     });
  record.ged = static_cast<int>(std::lround(best->value));
  record.provenance = best->provenance;
  const auto normalized = nged_similarity(best->value, n1, n2);
  record.nged = normalized.nged;
  record.sim = normalized.sim;
  return record;
}

std::size_t DatasetManifest::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw DataError(kModule, "unknown graph id '" + id + "'");
  return it->second;
}

void DatasetManifest::reindex() {
  std::sort(graphs.begin(), graphs.end(), [](const DerivedGraph& x, const DerivedGraph& y) {
    return x.graph.id() < y.graph.id();
  });
  index_.clear();
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (!index_.emplace(graphs[i].graph.id(), i).second) {
      throw DataError(kModule, "duplicate graph id '" + graphs[i].graph.id() + "'");
    }
  }
}

DatasetSplits split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                            std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ArgumentError(kModule, "split ratios must be non-negative and sum to 1");
  }
  std::vector<std::string> ids;
  ids.reserve(manifest.graphs.size());
  for (const auto& g : manifest.graphs) ids.push_back(g.graph.id());
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  const auto total = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * total));
  const auto n_val = std::min(ids.size() - n_train,
                              static_cast<std::size_t>(std::llround(ratios.val * total)));
  DatasetSplits out;
  out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                 ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

void compute_ground_truth(DatasetManifest& manifest, const GroundTruthOptions& options,
                          int threads) {
  manifest.reindex();
  const std::size_t n = manifest.graphs.size();
  manifest.pairs.assign(n * n, PairRecord{});
  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) work.emplace_back(i, j);
  }
  parallel_for(work.size(), threads, [&](std::size_t w) {
    const auto [i, j] = work[w];
    PairRecord r = ground_truth(manifest.graphs[i], manifest.graphs[j], options);
    PairRecord mirrored = r;
    std::swap(mirrored.id1, mirrored.id2);
    manifest.pairs[i * n + j] = std::move(r);
    manifest.pairs[j * n + i] = std::move(mirrored);
  });
}

DatasetManifest build_ba_dataset(const BaDatasetOptions& options) {
  if (options.basics < 1) throw ArgumentError(kModule, "need at least one basic graph");
  if (options.min_ged < 1 || options.max_ged < options.min_ged) {
    throw ArgumentError(kModule, "trim GED range must satisfy 1 <= min <= max");
  }
  DatasetManifest manifest;
  manifest.name = options.name.empty() ? "ba" + std::to_string(options.n) : options.name;
  const std::size_t basic_width = std::to_string(std::max<std::size_t>(options.basics, 1) - 1).size();
  const std::size_t trim_width =
      std::to_string(std::max<std::size_t>(options.trims_per_basic, 1) - 1).size();
  const int span = options.max_ged - options.min_ged + 1;

  std::uint64_t graph_counter = 0;
  for (std::size_t b = 0; b < options.basics; ++b) {
    const std::string basic_id = manifest.name + "-b" + zero_pad(b, basic_width);
    const std::uint64_t basic_seed = derive_seed(options.seed, b);
    Graph basic = generate_ba(options.n, options.attach, basic_seed, basic_id);
    DerivedGraph root{basic, basic_id, 0, {}, derive_seed(~options.seed, graph_counter++)};
    for (std::size_t t = 0; t < options.trims_per_basic; ++t) {
      const int target = options.min_ged + static_cast<int>(t % static_cast<std::size_t>(span));
      DerivedGraph d = trim(basic, target, derive_seed(basic_seed, t + 1),
                            basic_id + "-t" + zero_pad(t, trim_width));
      d.partition_seed = derive_seed(~options.seed, graph_counter++);
      manifest.graphs.push_back(std::move(d));
    }
    manifest.graphs.push_back(std::move(root));
  }
  manifest.reindex();
  compute_ground_truth(manifest, options.ground_truth, options.threads);
  manifest.splits = split_dataset(manifest, options.ratios, derive_seed(options.seed, 0x5917));
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::path staging = dir;
  staging += ".partial";
  fs::remove_all(staging);
  fs::create_directories(staging / "graphs");

  nlohmann::ordered_json index;
  index["format"] = kManifestFormat;
  index["name"] = manifest.name;
  auto entries = nlohmann::ordered_json::array();
  for (const auto& d : manifest.graphs) {
    save_graph_file(d.graph, staging / "graphs" / (d.graph.id() + ".json"));
    nlohmann::ordered_json entry;
    entry["id"] = d.graph.id();
    entry["root"] = d.root_id;
    entry["trim_ged"] = d.trim_ged;
    entry["partition_seed"] = d.partition_seed;
    auto ops = nlohmann::ordered_json::array();
    for (TrimOp op : d.ops) ops.push_back(to_string(op));
    entry["ops"] = std::move(ops);
    entries.push_back(std::move(entry));
  }
  index["graphs"] = std::move(entries);
  write_text_file_atomic(staging / "manifest.json", index.dump(1) + "\n");

  nlohmann::ordered_json splits;
  splits["train"] = manifest.splits.train;
  splits["val"] = manifest.splits.val;
  splits["test"] = manifest.splits.test;
  write_text_file_atomic(staging / "splits.json", splits.dump(1) + "\n");

  std::string csv = "id1,id2,ged,nged,sim,provenance\n";
  for (const auto& p : manifest.pairs) {
    csv += p.id1 + "," + p.id2 + "," + std::to_string(p.ged) + "," + format_double(p.nged) + "," +
           format_double(p.sim) + "," + to_string(p.provenance) + "\n";
  }
  write_text_file_atomic(staging / "pairs.csv", csv);

  fs::remove_all(dir);
  fs::rename(staging, dir);
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  DatasetManifest manifest;
  try {
    const auto index = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    if (index.value("format", "") != kManifestFormat) {
      throw DataError(kModule, (dir / "manifest.json").string() + ": unsupported format tag");
    }
    manifest.name = index.at("name").get<std::string>();
    for (const auto& entry : index.at("graphs")) {
      const auto id = entry.at("id").get<std::string>();
      Graph g = load_graph_file(dir / "graphs" / (id + ".json"));
      if (g.id() != id) g = g.with_id(id);
      DerivedGraph d{std::move(g), entry.at("root").get<std::string>(),
                     entry.at("trim_ged").get<int>(), {},
                     entry.at("partition_seed").get<std::uint64_t>()};
      for (const auto& op : entry.value("ops", nlohmann::json::array())) {
        const auto name = op.get<std::string>();
        if (name == "delete_leaf") d.ops.push_back(TrimOp::kDeleteLeaf);
        else if (name == "add_leaf") d.ops.push_back(TrimOp::kAddLeaf);
        else if (name == "add_edge") d.ops.push_back(TrimOp::kAddEdge);
        else throw DataError(kModule, "unknown trim op '" + name + "'");
      }
      manifest.graphs.push_back(std::move(d));
    }
    manifest.reindex();

    const auto splits = nlohmann::json::parse(read_text_file(dir / "splits.json"));
    manifest.splits.train = splits.at("train").get<std::vector<std::string>>();
    manifest.splits.val = splits.at("val").get<std::vector<std::string>>();
    manifest.splits.test = splits.at("test").get<std::vector<std::string>>();
    for (const auto* list : {&manifest.splits.train, &manifest.splits.val, &manifest.splits.test}) {
      for (const auto& id : *list) manifest.index_of(id);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(kModule, dir.string() + ": malformed dataset metadata: " + e.what());
  }

  std::ifstream csv(dir / "pairs.csv");
  if (!csv) throw DataError(kModule, "cannot open " + (dir / "pairs.csv").string());
  std::string line;
  std::getline(csv, line);
  if (line != "id1,id2,ged,nged,sim,provenance") {
    throw DataError(kModule, "pairs.csv: unexpected header '" + line + "'");
  }
  const std::size_t n = manifest.graphs.size();
  manifest.pairs.assign(n * n, PairRecord{});
  std::vector<char> filled(n * n, 0);
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      throw DataError(kModule, "pairs.csv:" + std::to_string(line_no) + ": expected 6 fields");
    }
    try {
      PairRecord r{f[0], f[1], std::stoi(f[2]), std::stod(f[3]), std::stod(f[4]),
                   parse_provenance(f[5])};
      const std::size_t slot = manifest.index_of(r.id1) * n + manifest.index_of(r.id2);
      if (filled[slot]++) {
        throw DataError(kModule, "pairs.csv:" + std::to_string(line_no) + ": duplicate pair");
      }
      manifest.pairs[slot] = std::move(r);
    } catch (const std::logic_error&) {
      throw DataError(kModule, "pairs.csv:" + std::to_string(line_no) + ": bad number");
    }
  }
  if (std::find(filled.begin(), filled.end(), 0) != filled.end()) {
    throw DataError(kModule, "pairs.csv does not cover every ordered pair");
  }
  return manifest;
}

}  // namespace psim
