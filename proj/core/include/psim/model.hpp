#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "psim/fluidc.hpp"
#include "psim/graph.hpp"
#include "psim/tensor.hpp"

namespace psim {

struct ModelConfig {
  /// Communities per graph.
  int k = 3;
  /// Subgraph pairs sent to node-level matching, 0..k*k.
  int m = 9;
  /// Propagation rounds of the node-level matcher.
  int rounds = 3;
  /// Output widths of the GIN encoder layers.
  std::vector<int> gin_dims{64, 32, 16};
  int matcher_dim = 16;
  int fusion_dim = 8;
  /// Constant initial node feature (value and width).
  double feature_value = 1.0;
  int feature_dim = 1;

  // Ablations.
  bool sub_attention_off = false;    // mean pooling of subgraph nodes
  bool cross_attention_off = false;  // uniform cross-graph weights
  bool cross_messages_off = false;   // drop cross-graph messages
  bool within_messages_off = false;  // drop within-graph messages

  std::uint64_t init_seed = 0;

  int encoder_dim() const { return gin_dims.back(); }
  /// Throws ArgumentError on inconsistent settings.
  void validate() const;
};

std::string model_config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults.
ModelConfig model_config_from_json(std::string_view json_text);

/// y = x W + b.
struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  Var operator()(Tape& tape, Var x) const;
};

/// Two linear layers with a PReLU in between; the output is linear.
struct Mlp2 {
  Linear first;
  Parameter* slope = nullptr;
  Linear second;
  Var operator()(Tape& tape, Var x) const;
};

struct GinLayerParams {
  Parameter* eps = nullptr;
  Mlp2 mlp;
};

/// h_v' = MLP((1 + eps) h_v + sum of neighbor h_u). Isolated nodes get a
/// zero neighbor term.
Var gin_layer(Tape& tape, Var features, const Graph& g, const GinLayerParams& layer);

/// Instrumentation for one or more forward passes.
struct ForwardStats {
  std::size_t propagation_steps = 0;
  std::size_t fine_pairs = 0;
};

/// Pooled subgraph embeddings already recorded on one tape, keyed by
/// subgraph address. Lets a minibatch encode each subgraph once.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(Tape& tape) : tape_(&tape) {}
  Tape& tape() const { return *tape_; }
  const Var* find(const Graph* g) const;
  void put(const Graph* g, Var v) { pooled_.emplace(g, v); }

 private:
  Tape* tape_;
  std::unordered_map<const Graph*, Var> pooled_;
};

/// Partitions of the two graphs of one scored pair.
struct PairPartitions {
  const PartitionResult* first = nullptr;
  const PartitionResult* second = nullptr;
};

/// The partition-based similarity model: GIN encoding and attention pooling
/// of every subgraph, k x k cosine scores, node-level matching of the top m
/// pairs, and an MLP fusion into a score in (0, 1).
class PSimGnn {
 public:
  explicit PSimGnn(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  /// Constant features through the GIN stack: n x encoder_dim.
  Var encode_subgraph(Tape& tape, const Graph& g) const;
  /// tanh-context attention pooling (mean pooling under sub_attention_off).
  Var attention_pool(Tape& tape, Var x) const;
  /// Pooled embedding of `g`, reusing `cache` when given.
  Var subgraph_embedding(Tape& tape, const Graph& g, EmbeddingCache* cache = nullptr) const;

  /// k x k cosine scores between pooled subgraph embeddings, flattened
  /// row-major into 1 x k^2 (entry i*k + j compares subs1[i] with subs2[j]).
  Var coarse_scores(Tape& tape, const std::vector<InducedSubgraph>& subs1,
                    const std::vector<InducedSubgraph>& subs2,
                    EmbeddingCache* cache = nullptr) const;

  /// Initial matcher embeddings: constant features through a linear map.
  Var matcher_input(Tape& tape, const Graph& g) const;
  /// One round of within-graph and cross-graph message passing.
  std::pair<Var, Var> propagation_step(Tape& tape, Var h1, Var h2, const Graph& g1,
                                       const Graph& g2) const;
  /// Gated sum of node states followed by MLP_agg: 1 x matcher_dim.
  Var aggregate_matched(Tape& tape, Var h) const;
  /// Cosine of the aggregated embeddings after `rounds` propagation steps.
  Var fine_score(Tape& tape, const Graph& sub1, const Graph& sub2,
                 ForwardStats* stats = nullptr) const;

  /// Coarse (1 x k^2) and fine (1 x m) scores to the final similarity. Both
  /// vectors enter their heads sorted in descending order, so the result does
  /// not depend on community numbering or argument order.
  Var fuse(Tape& tape, Var coarse, Var fine) const;

  /// Full pairwise score in (0, 1) from precomputed partitions.
  Var forward(Tape& tape, const PartitionResult& p1, const PartitionResult& p2,
              ForwardStats* stats = nullptr, EmbeddingCache* cache = nullptr) const;

  /// Scores every pair in one pass over the disjoint union of all involved
  /// subgraphs: B x 1, row b equal to forward() on pairs[b].
  Var forward_batch(Tape& tape, std::span<const PairPartitions> pairs,
                    ForwardStats* stats = nullptr) const;

  /// Parameter groups: "encoder", "pool", "matcher", "fusion".
  static std::string group_of(const std::string& parameter_name);

 private:
  Linear make_linear(const std::string& name, int in, int out, Rng& rng);
  Mlp2 make_mlp(const std::string& name, int in, int hidden, int out, Rng& rng);
  Parameter* make_slope(const std::string& name);
  /// Fusion of B rows of already sorted coarse and fine scores.
  Var fuse_sorted(Tape& tape, Var coarse, Var fine, Eigen::Index batch) const;

  ModelConfig config_;
  ParameterSet params_;
  std::vector<GinLayerParams> gin_;
  std::vector<Parameter*> gin_activation_;
  Parameter* w_z_ = nullptr;
  Linear matcher_init_;
  Mlp2 message_;
  Mlp2 update_;
  Mlp2 gate_;
  Mlp2 value_;
  Mlp2 aggregate_;
  Linear coarse_head_;
  Parameter* coarse_slope_ = nullptr;
  Linear fine_head_;
  Parameter* fine_slope_ = nullptr;
  Parameter* fine_constant_ = nullptr;
  std::vector<Linear> final_layers_;
  std::vector<Parameter*> final_slopes_;
};

/// The m highest entries of a k x k score matrix, descending, ties broken by
/// lexicographic (i, j).
std::vector<std::pair<int, int>> select_top_m(const Matrix& scores, int m);

/// Partitions keyed by graph id, computed on first use with a fixed seed.
class PartitionCache {
 public:
  explicit PartitionCache(int k, int max_sweeps = kDefaultMaxSweeps) : k_(k), max_sweeps_(max_sweeps) {}
  const PartitionResult& get(const Graph& g, std::uint64_t seed);
  void put(const std::string& id, PartitionResult p) { cache_.insert_or_assign(id, std::move(p)); }
  int k() const noexcept { return k_; }

 private:
  int k_;
  int max_sweeps_;
  std::unordered_map<std::string, PartitionResult> cache_;
};

}  // namespace psim
