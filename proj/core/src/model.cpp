#include "psim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "psim/error.hpp"

namespace psim {
namespace {

constexpr const char* kModule = "model-psimgnn";
constexpr double kCosineEps = 1e-12;
constexpr double kInitialSlope = 0.25;

Matrix glorot(int in, int out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

/// Indices that sort a row vector descending; equal values keep index order.
std::vector<int> descending_order(const Matrix& row) {
  std::vector<int> order(static_cast<std::size_t>(row.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return row(0, a) > row(0, b); });
  return order;
}

/// Both directions of every edge as (destination, source) index lists.
std::pair<std::vector<int>, std::vector<int>> directed_edges(const Graph& g) {
  std::vector<int> dst, src;
  dst.reserve(2 * g.edge_count());
  src.reserve(2 * g.edge_count());
  for (const auto& e : g.edges()) {
    dst.push_back(e.u);
    src.push_back(e.v);
    dst.push_back(e.v);
    src.push_back(e.u);
  }
  return {std::move(dst), std::move(src)};
}

}  // namespace

void ModelConfig::validate() const {
  if (k < 1) throw ArgumentError(kModule, "k must be >= 1");
  if (m < 0 || m > k * k) {
    throw ArgumentError(kModule, "m = " + std::to_string(m) + " must lie in 0..k^2 = " +
                                     std::to_string(k * k));
  }
  if (rounds < 0) throw ArgumentError(kModule, "rounds must be >= 0");
  if (gin_dims.empty()) throw ArgumentError(kModule, "encoder needs at least one GIN layer");
  for (int d : gin_dims) {
    if (d < 1) throw ArgumentError(kModule, "GIN widths must be >= 1");
  }
  if (matcher_dim < 1 || fusion_dim < 1 || feature_dim < 1) {
    throw ArgumentError(kModule, "matcher, fusion and feature widths must be >= 1");
  }
}

std::string model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json doc;
  doc["k"] = c.k;
  doc["m"] = c.m;
  doc["rounds"] = c.rounds;
  doc["gin_dims"] = c.gin_dims;
  doc["matcher_dim"] = c.matcher_dim;
  doc["fusion_dim"] = c.fusion_dim;
  doc["feature_value"] = c.feature_value;
  doc["feature_dim"] = c.feature_dim;
  doc["sub_attention_off"] = c.sub_attention_off;
  doc["cross_attention_off"] = c.cross_attention_off;
  doc["cross_messages_off"] = c.cross_messages_off;
  doc["within_messages_off"] = c.within_messages_off;
  doc["init_seed"] = c.init_seed;
  return doc.dump(1);
}

ModelConfig model_config_from_json(std::string_view json_text) {
  ModelConfig c;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    if (!doc.is_object()) throw DataError(kModule, "model config must be a JSON object");
    c.k = doc.value("k", c.k);
    c.m = doc.value("m", c.m);
    c.rounds = doc.value("rounds", c.rounds);
    c.gin_dims = doc.value("gin_dims", c.gin_dims);
    c.matcher_dim = doc.value("matcher_dim", c.matcher_dim);
    c.fusion_dim = doc.value("fusion_dim", c.fusion_dim);
    c.feature_value = doc.value("feature_value", c.feature_value);
    c.feature_dim = doc.value("feature_dim", c.feature_dim);
    c.sub_attention_off = doc.value("sub_attention_off", c.sub_attention_off);
    c.cross_attention_off = doc.value("cross_attention_off", c.cross_attention_off);
    c.cross_messages_off = doc.value("cross_messages_off", c.cross_messages_off);
    c.within_messages_off = doc.value("within_messages_off", c.within_messages_off);
    c.init_seed = doc.value("init_seed", c.init_seed);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(kModule, std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

Var Linear::operator()(Tape& tape, Var x) const {
  return add_row(matmul(x, tape.parameter(*weight)), tape.parameter(*bias));
}

Var Mlp2::operator()(Tape& tape, Var x) const {
  return second(tape, prelu(first(tape, x), tape.parameter(*slope)));
}

Var gin_layer(Tape& tape, Var features, const Graph& g, const GinLayerParams& layer) {
  if (features.cols() != layer.mlp.first.weight->value.rows()) {
    throw ArgumentError(kModule, "gin_layer: feature width " + std::to_string(features.cols()) +
                                     " does not match layer input " +
                                     std::to_string(layer.mlp.first.weight->value.rows()));
  }
  Var self = add(features, scale(features, tape.parameter(*layer.eps)));
  Var combined = g.edge_count() > 0 ? add(self, neighbor_sum(features, g)) : self;
  return layer.mlp(tape, combined);
}

const Var* EmbeddingCache::find(const Graph* g) const {
  auto it = pooled_.find(g);
  return it == pooled_.end() ? nullptr : &it->second;
}

PSimGnn::PSimGnn(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.init_seed);
  const int kk = config_.k * config_.k;
  const int d = config_.matcher_dim;
  const int f = config_.fusion_dim;

  int in = config_.feature_dim;
  for (std::size_t l = 0; l < config_.gin_dims.size(); ++l) {
    const int out = config_.gin_dims[l];
    const std::string prefix = "encoder.gin" + std::to_string(l);
    GinLayerParams layer;
    layer.eps = &params_.add(prefix + ".eps", Matrix::Zero(1, 1));
    layer.mlp = make_mlp(prefix + ".mlp", in, out, out, rng);
    gin_.push_back(layer);
    if (l + 1 < config_.gin_dims.size()) gin_activation_.push_back(make_slope(prefix + ".act"));
    in = out;
  }
  const int e = config_.encoder_dim();
  w_z_ = &params_.add("pool.w_z", glorot(e, e, rng));

  matcher_init_ = make_linear("matcher.init", config_.feature_dim, d, rng);
  message_ = make_mlp("matcher.message", 2 * d, d, d, rng);
  update_ = make_mlp("matcher.update", 3 * d, d, d, rng);
  gate_ = make_mlp("matcher.gate", d, d, d, rng);
  value_ = make_mlp("matcher.value", d, d, d, rng);
  aggregate_ = make_mlp("matcher.aggregate", d, d, d, rng);

  coarse_head_ = make_linear("fusion.coarse", kk, f, rng);
  coarse_slope_ = make_slope("fusion.coarse");
  if (config_.m > 0) {
    fine_head_ = make_linear("fusion.fine", config_.m, f, rng);
    fine_slope_ = make_slope("fusion.fine");
  } else {
    fine_constant_ = &params_.add("fusion.fine_constant", Matrix::Zero(1, f));
  }
  // 2f -> f -> f/2 -> ... -> 1, halving while above one.
  int width = 2 * f;
  for (int layer = 0; width > 1; ++layer) {
    const int next = std::max(1, width / 2);
    final_layers_.push_back(make_linear("fusion.final" + std::to_string(layer), width, next, rng));
    if (next > 1) final_slopes_.push_back(make_slope("fusion.final" + std::to_string(layer)));
    width = next;
  }
}

Linear PSimGnn::make_linear(const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.weight = &params_.add(name + ".w", glorot(in, out, rng));
  l.bias = &params_.add(name + ".b", Matrix::Zero(1, out));
  return l;
}

Mlp2 PSimGnn::make_mlp(const std::string& name, int in, int hidden, int out, Rng& rng) {
  Mlp2 m;
  m.first = make_linear(name + ".l1", in, hidden, rng);
  m.slope = make_slope(name + ".l1");
  m.second = make_linear(name + ".l2", hidden, out, rng);
  return m;
}

Parameter* PSimGnn::make_slope(const std::string& name) {
  return &params_.add(name + ".slope", Matrix::Constant(1, 1, kInitialSlope));
}

Var PSimGnn::encode_subgraph(Tape& tape, const Graph& g) const {
  Var h = tape.constant(constant_features(g, config_.feature_value, config_.feature_dim));
  for (std::size_t l = 0; l < gin_.size(); ++l) {
    h = gin_layer(tape, h, g, gin_[l]);
    if (l < gin_activation_.size()) h = prelu(h, tape.parameter(*gin_activation_[l]));
  }
  return h;
}

Var PSimGnn::attention_pool(Tape& tape, Var x) const {
  if (x.rows() < 1) throw ArgumentError(kModule, "attention_pool: empty node set");
  Var mean = row_mean(x);
  if (config_.sub_attention_off) return mean;
  Var context = tanh(matmul(mean, tape.parameter(*w_z_)));  // 1 x D
  Var weights = logistic(matmul(x, transpose(context)));     // N x 1
  return matmul(transpose(weights), x);                      // 1 x D
}

Var PSimGnn::subgraph_embedding(Tape& tape, const Graph& g, EmbeddingCache* cache) const {
  if (cache) {
    if (&cache->tape() != &tape) throw ArgumentError(kModule, "embedding cache bound to another tape");
    if (const Var* hit = cache->find(&g)) return *hit;
  }
  Var pooled = attention_pool(tape, encode_subgraph(tape, g));
  if (cache) cache->put(&g, pooled);
  return pooled;
}

Var PSimGnn::coarse_scores(Tape& tape, const std::vector<InducedSubgraph>& subs1,
                           const std::vector<InducedSubgraph>& subs2, EmbeddingCache* cache) const {
  const auto k = static_cast<std::size_t>(config_.k);
  if (subs1.size() != k || subs2.size() != k) {
    throw ArgumentError(kModule, "coarse_scores: expected " + std::to_string(k) +
                                     " subgraphs per graph");
  }
  std::vector<Var> left, right;
  for (const auto& s : subs1) left.push_back(subgraph_embedding(tape, s.graph, cache));
  for (const auto& s : subs2) right.push_back(subgraph_embedding(tape, s.graph, cache));
  std::vector<Var> scores;
  scores.reserve(k * k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) scores.push_back(cosine(left[i], right[j], kCosineEps));
  }
  return concat_cols(std::span<const Var>(scores));
}

std::vector<std::pair<int, int>> select_top_m(const Matrix& scores, int m) {
  if (scores.rows() != scores.cols()) throw ArgumentError(kModule, "select_top_m: scores must be k x k");
  const int total = static_cast<int>(scores.size());
  if (m < 0 || m > total) {
    throw ArgumentError(kModule, "select_top_m: m = " + std::to_string(m) + " outside 0.." +
                                     std::to_string(total));
  }
  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < scores.rows(); ++i) {
    for (int j = 0; j < scores.cols(); ++j) cells.emplace_back(i, j);
  }
  std::stable_sort(cells.begin(), cells.end(), [&](const auto& a, const auto& b) {
    return scores(a.first, a.second) > scores(b.first, b.second);
  });
  cells.resize(static_cast<std::size_t>(m));
  return cells;
}

Var PSimGnn::matcher_input(Tape& tape, const Graph& g) const {
  Var x = tape.constant(constant_features(g, config_.feature_value, config_.feature_dim));
  return matcher_init_(tape, x);
}

std::pair<Var, Var> PSimGnn::propagation_step(Tape& tape, Var h1, Var h2, const Graph& g1,
                                              const Graph& g2) const {
  const int d = config_.matcher_dim;
  if (h1.cols() != d || h2.cols() != d) {
    throw ArgumentError(kModule, "propagation_step: embeddings must have width " + std::to_string(d));
  }
  auto within = [&](Var h, const Graph& g) {
    if (config_.within_messages_off || g.edge_count() == 0) {
      return tape.constant(Matrix::Zero(h.rows(), d));
    }
    auto [dst, src] = directed_edges(g);
    Var pairs = concat_cols({gather_rows(h, dst), gather_rows(h, src)});
    return scatter_add_rows(message_(tape, pairs), std::move(dst), h.rows());
  };
  auto cross = [&](Var h_self, Var h_other) {
    if (config_.cross_messages_off) return tape.constant(Matrix::Zero(h_self.rows(), d));
    Var attention;
    if (config_.cross_attention_off) {
      attention = tape.constant(Matrix::Constant(h_self.rows(), h_other.rows(),
                                                 1.0 / static_cast<double>(h_other.rows())));
    } else {
      attention = row_softmax(matmul(h_self, transpose(h_other)));
    }
    // sum_j a_ij (h_i - h_j) = h_i - sum_j a_ij h_j since each row of a sums to 1.
    return sub(h_self, matmul(attention, h_other));
  };
  Var next1 = update_(tape, concat_cols({h1, within(h1, g1), cross(h1, h2)}));
  Var next2 = update_(tape, concat_cols({h2, within(h2, g2), cross(h2, h1)}));
  return {next1, next2};
}

Var PSimGnn::aggregate_matched(Tape& tape, Var h) const {
  Var gate = logistic(gate_(tape, h));
  return aggregate_(tape, row_sum(mul(gate, value_(tape, h))));
}

Var PSimGnn::fine_score(Tape& tape, const Graph& sub1, const Graph& sub2, ForwardStats* stats) const {
  Var h1 = matcher_input(tape, sub1);
  Var h2 = matcher_input(tape, sub2);
  for (int t = 0; t < config_.rounds; ++t) {
    std::tie(h1, h2) = propagation_step(tape, h1, h2, sub1, sub2);
    if (stats) ++stats->propagation_steps;
  }
  if (stats) ++stats->fine_pairs;
  return cosine(aggregate_matched(tape, h1), aggregate_matched(tape, h2), kCosineEps);
}

Var PSimGnn::fuse(Tape& tape, Var coarse, Var fine) const {
  const int kk = config_.k * config_.k;
  if (coarse.rows() != 1 || coarse.cols() != kk) {
    throw ArgumentError(kModule, "fuse: coarse scores must be 1 x " + std::to_string(kk));
  }
  Var coarse_sorted = permute_cols(coarse, descending_order(coarse.value()));
  Var fine_sorted;
  if (config_.m > 0) {
    if (!fine.valid() || fine.rows() != 1 || fine.cols() != config_.m) {
      throw ArgumentError(kModule, "fuse: fine scores must be 1 x " + std::to_string(config_.m));
    }
    fine_sorted = permute_cols(fine, descending_order(fine.value()));
  } else if (fine.valid() && fine.cols() != 0) {
    throw ArgumentError(kModule, "fuse: m = 0 takes no fine scores");
  }
  return fuse_sorted(tape, coarse_sorted, fine_sorted, 1);
}

Var PSimGnn::fuse_sorted(Tape& tape, Var coarse, Var fine, Eigen::Index batch) const {
  Var s_coarse = prelu(coarse_head_(tape, coarse), tape.parameter(*coarse_slope_));
  Var s_fine = config_.m > 0
                   ? prelu(fine_head_(tape, fine), tape.parameter(*fine_slope_))
                   : gather_rows(tape.parameter(*fine_constant_),
                                 std::vector<int>(static_cast<std::size_t>(batch), 0));
  Var x = concat_cols({s_coarse, s_fine});
  for (std::size_t l = 0; l < final_layers_.size(); ++l) {
    x = final_layers_[l](tape, x);
    if (l < final_slopes_.size()) x = prelu(x, tape.parameter(*final_slopes_[l]));
  }
  return logistic(x);
}

Var PSimGnn::forward(Tape& tape, const PartitionResult& p1, const PartitionResult& p2,
                     ForwardStats* stats, EmbeddingCache* cache) const {
  if (p1.k != config_.k || p2.k != config_.k) {
    throw ArgumentError(kModule, "forward: partitions must have k = " + std::to_string(config_.k));
  }
  Var coarse = coarse_scores(tape, p1.subgraphs, p2.subgraphs, cache);
  const Matrix grid = coarse.value().reshaped<Eigen::RowMajor>(config_.k, config_.k);
  Var fine;
  if (config_.m > 0) {
    std::vector<Var> fine_scores;
    for (const auto& [i, j] : select_top_m(grid, config_.m)) {
      fine_scores.push_back(fine_score(tape, p1.subgraphs[static_cast<std::size_t>(i)].graph,
                                       p2.subgraphs[static_cast<std::size_t>(j)].graph, stats));
    }
    fine = concat_cols(std::span<const Var>(fine_scores));
  }
  return fuse(tape, coarse, fine);
}

namespace {

struct UnionGraph {
  Graph graph;
  std::vector<int> segment;
  std::vector<RowRange> ranges;
};

UnionGraph disjoint_union(const std::vector<const Graph*>& parts) {
  std::vector<Edge> edges;
  std::vector<int> segment;
  std::vector<RowRange> ranges;
  NodeId offset = 0;
  for (std::size_t s = 0; s < parts.size(); ++s) {
    const Graph& g = *parts[s];
    for (const auto& e : g.edges()) edges.push_back({e.u + offset, e.v + offset});
    ranges.push_back({offset, static_cast<Eigen::Index>(g.node_count())});
    segment.insert(segment.end(), g.node_count(), static_cast<int>(s));
    offset += static_cast<NodeId>(g.node_count());
  }
  return {Graph("union", static_cast<std::size_t>(offset), std::move(edges)), std::move(segment),
          std::move(ranges)};
}

/// Row-major flat indices that sort each length-`width` run of a column
/// descending.
std::vector<int> sorted_runs(const Matrix& column, Eigen::Index width) {
  std::vector<int> index(static_cast<std::size_t>(column.rows()));
  for (Eigen::Index b = 0; b * width < column.rows(); ++b) {
    const Matrix row = column.middleRows(b * width, width).transpose();
    const auto order = descending_order(row);
    for (Eigen::Index c = 0; c < width; ++c) {
      index[static_cast<std::size_t>(b * width + c)] = static_cast<int>(b * width + order[static_cast<std::size_t>(c)]);
    }
  }
  return index;
}

}  // namespace

Var PSimGnn::forward_batch(Tape& tape, std::span<const PairPartitions> pairs,
                           ForwardStats* stats) const {
  if (pairs.empty()) throw ArgumentError(kModule, "forward_batch: no pairs");
  const int k = config_.k;
  const int kk = k * k;
  const int m = config_.m;
  const auto batch = static_cast<Eigen::Index>(pairs.size());

  // Every distinct subgraph is encoded and pooled once.
  std::vector<const Graph*> distinct;
  std::unordered_map<const Graph*, int> slot;
  auto slot_of = [&](const Graph* g) {
    auto [it, fresh] = slot.emplace(g, static_cast<int>(distinct.size()));
    if (fresh) distinct.push_back(g);
    return it->second;
  };
  std::vector<int> left, right;
  for (const auto& p : pairs) {
    if (!p.first || !p.second || p.first->k != k || p.second->k != k) {
      throw ArgumentError(kModule, "forward_batch: partitions must have k = " + std::to_string(k));
    }
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) {
        left.push_back(slot_of(&p.first->subgraphs[static_cast<std::size_t>(i)].graph));
        right.push_back(slot_of(&p.second->subgraphs[static_cast<std::size_t>(j)].graph));
      }
    }
  }
  const UnionGraph subs = disjoint_union(distinct);
  const auto count = static_cast<Eigen::Index>(distinct.size());
  Var h = encode_subgraph(tape, subs.graph);
  Matrix inverse_size(count, 1);
  for (Eigen::Index s = 0; s < count; ++s) inverse_size(s, 0) = 1.0 / static_cast<double>(subs.ranges[static_cast<std::size_t>(s)].count);
  Var pooled = mul_col(scatter_add_rows(h, subs.segment, count), tape.constant(inverse_size));
  if (!config_.sub_attention_off) {
    Var context = tanh(matmul(pooled, tape.parameter(*w_z_)));
    Var weights = logistic(row_dot(h, gather_rows(context, subs.segment)));
    pooled = scatter_add_rows(mul_col(h, weights), subs.segment, count);
  }
  Var coarse = cosine_rows(gather_rows(pooled, left), gather_rows(pooled, right), kCosineEps);
  Var coarse_sorted = gather_flat(coarse, batch, kk, sorted_runs(coarse.value(), kk));
  if (m == 0) return fuse_sorted(tape, coarse_sorted, Var{}, batch);

  // Node-level matching over the union of all selected subgraph pairs.
  std::vector<const Graph*> fine1, fine2;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Matrix grid = coarse.value().middleRows(b * kk, kk).reshaped<Eigen::RowMajor>(k, k);
    const auto& p = pairs[static_cast<std::size_t>(b)];
    for (const auto& [i, j] : select_top_m(grid, m)) {
      fine1.push_back(&p.first->subgraphs[static_cast<std::size_t>(i)].graph);
      fine2.push_back(&p.second->subgraphs[static_cast<std::size_t>(j)].graph);
    }
  }
  const UnionGraph u1 = disjoint_union(fine1);
  const UnionGraph u2 = disjoint_union(fine2);
  const auto fine_count = static_cast<Eigen::Index>(fine1.size());
  const int d = config_.matcher_dim;

  auto within = [&](Var state, const Graph& g) {
    if (config_.within_messages_off || g.edge_count() == 0) {
      return tape.constant(Matrix::Zero(state.rows(), d));
    }
    // First message layer on (h_dst, h_src), evaluated per node before the gather.
    auto [dst, src] = directed_edges(g);
    Var w1 = tape.parameter(*message_.first.weight);
    Var to_dst = matmul(state, slice_rows(w1, 0, d));
    Var to_src = matmul(state, slice_rows(w1, d, d));
    Var hidden = add_row(add(gather_rows(to_dst, dst), gather_rows(to_src, std::move(src))),
                         tape.parameter(*message_.first.bias));
    Var messages = message_.second(tape, prelu(hidden, tape.parameter(*message_.slope)));
    return scatter_add_rows(messages, std::move(dst), state.rows());
  };
  auto cross = [&](Var self, Var other, const UnionGraph& us, const UnionGraph& uo) {
    if (config_.cross_messages_off) return tape.constant(Matrix::Zero(self.rows(), d));
    return block_cross_attention(self, other, us.ranges, uo.ranges, config_.cross_attention_off);
  };

  Var h1 = matcher_input(tape, u1.graph);
  Var h2 = matcher_input(tape, u2.graph);
  for (int t = 0; t < config_.rounds; ++t) {
    Var next1 = update_(tape, concat_cols({h1, within(h1, u1.graph), cross(h1, h2, u1, u2)}));
    Var next2 = update_(tape, concat_cols({h2, within(h2, u2.graph), cross(h2, h1, u2, u1)}));
    h1 = next1;
    h2 = next2;
  }
  if (stats) {
    stats->propagation_steps += static_cast<std::size_t>(fine_count) * static_cast<std::size_t>(config_.rounds);
    stats->fine_pairs += static_cast<std::size_t>(fine_count);
  }
  auto aggregate = [&](Var state, const UnionGraph& u) {
    Var gated = mul(logistic(gate_(tape, state)), value_(tape, state));
    return aggregate_(tape, scatter_add_rows(gated, u.segment, fine_count));
  };
  Var fine = cosine_rows(aggregate(h1, u1), aggregate(h2, u2), kCosineEps);
  Var fine_sorted = gather_flat(fine, batch, m, sorted_runs(fine.value(), m));
  return fuse_sorted(tape, coarse_sorted, fine_sorted, batch);
}

std::string PSimGnn::group_of(const std::string& parameter_name) {
  return parameter_name.substr(0, parameter_name.find('.'));
}

const PartitionResult& PartitionCache::get(const Graph& g, std::uint64_t seed) {
  auto it = cache_.find(g.id());
  if (it != cache_.end()) return it->second;
  if (static_cast<std::size_t>(k_) > g.node_count()) {
    throw ArgumentError(kModule, "graph '" + g.id() + "' has " + std::to_string(g.node_count()) +
                                     " nodes, fewer than k = " + std::to_string(k_));
  }
  return cache_.emplace(g.id(), fluidc(g, k_, seed, max_sweeps_)).first->second;
}

}  // namespace psim
