#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "psim/ged.hpp"
#include "psim/graph.hpp"

namespace psim {

/// Barabasi-Albert graph: starts from `m` isolated nodes; every new node
/// attaches to `m` distinct existing nodes with probability proportional to
/// degree (uniformly while all degrees are zero). m = 1 yields a tree.
Graph generate_ba(std::size_t n, std::size_t m, std::uint64_t seed, std::string id = {});

enum class TrimOp { kDeleteLeaf, kAddLeaf, kAddEdge };

/// Bookkept edit cost: a leaf deletion or addition moves one node and one
/// edge (2); an added edge costs 1.
int trim_op_cost(TrimOp op) noexcept;
const char* to_string(TrimOp op) noexcept;

/// A dataset graph with its trimming provenance. Basic graphs are their own
/// root with trim_ged 0.
struct DerivedGraph {
  Graph graph;
  std::string root_id;
  int trim_ged = 0;
  std::vector<TrimOp> ops;
  /// Seed for this graph's FluidC partition, fixed at generation time.
  std::uint64_t partition_seed = 0;

  bool is_basic() const { return root_id == graph.id(); }
};

/// Applies random feasible trimming operations whose costs sum to exactly
/// `target_ged`. New leaves attach to a uniform random node and inherit its
/// label. Infeasible draws restart from `g` with a derived stream; DataError
/// after `max_attempts` restarts.
DerivedGraph trim(const Graph& g, int target_ged, std::uint64_t seed, std::string id = {},
                  int max_attempts = 64);

enum class Provenance { kTrim, kTrimTriangle, kHungarian, kVj, kBeam, kExact };

const char* to_string(Provenance p) noexcept;
Provenance parse_provenance(std::string_view name);

struct PairRecord {
  std::string id1;
  std::string id2;
  int ged = 0;
  double nged = 0.0;
  double sim = 1.0;
  Provenance provenance = Provenance::kExact;
};

struct GroundTruthOptions {
  std::size_t beam_width = kDefaultBeamWidth;
  EditCostModel cost{};
};

/// Minimum over the available GED upper bounds: Hungarian, VJ and beam,
/// plus trim_ged when one graph is the other's root, plus the sum of both
/// trim_geds when they share a root. Provenance names the winning candidate,
/// first in the order trim, trim_triangle, hungarian, vj, beam on ties. A
/// graph paired with itself gets GED 0 with provenance exact.
PairRecord ground_truth(const DerivedGraph& a, const DerivedGraph& b,
                        const GroundTruthOptions& options = {});

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct DatasetSplits {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Graphs sorted by id; pairs hold the full ordered product in row-major
/// graph order, so pair(i, j) is an index computation.
struct DatasetManifest {
  std::string name;
  std::vector<DerivedGraph> graphs;
  std::vector<PairRecord> pairs;
  DatasetSplits splits;

  std::size_t index_of(const std::string& id) const;
  const PairRecord& pair(std::size_t i, std::size_t j) const {
    return pairs[i * graphs.size() + j];
  }
  const DerivedGraph& graph(const std::string& id) const { return graphs[index_of(id)]; }

  /// Rebuilds the id index; call after mutating `graphs`.
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Seeded graph-level split. Counts are round(ratio * N) for train and val,
/// the remainder for test; each list is sorted by id.
DatasetSplits split_dataset(const DatasetManifest& manifest, const SplitRatios& ratios,
                            std::uint64_t seed);

struct BaDatasetOptions {
  std::string name;  // defaults to "ba<n>"
  std::size_t n = 60;
  std::size_t attach = 1;  // BA edges per new node
  std::size_t basics = 2;
  std::size_t trims_per_basic = 99;
  int min_ged = 1;
  int max_ged = 10;
  std::uint64_t seed = 0;
  GroundTruthOptions ground_truth{};
  SplitRatios ratios{};
  int threads = 1;
};

/// Trim targets cycle through min_ged..max_ged, so 99 trims over 1..10 give
/// ten of each target and nine of the last.
DatasetManifest build_ba_dataset(const BaDatasetOptions& options);

/// Fills manifest.pairs with ground_truth over the full ordered product,
/// evaluating each unordered pair once.
void compute_ground_truth(DatasetManifest& manifest, const GroundTruthOptions& options,
                          int threads = 1);

/// Directory layout: graphs/<id>.json, pairs.csv
/// (`id1,id2,ged,nged,sim,provenance`), splits.json and manifest.json. The
/// directory is assembled under a temporary name and renamed into place.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest load_manifest(const std::filesystem::path& dir);

}  // namespace psim
