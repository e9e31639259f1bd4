#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "psim/error.hpp"
#include "psim/ged.hpp"

using namespace psim;

namespace {

Graph triangle() { return Graph("tri", 3, {{0, 1}, {0, 2}, {1, 2}}); }
Graph path3() { return Graph("p3", 3, {{0, 1}, {1, 2}}); }
Graph path2() { return Graph("p2", 2, {{0, 1}}); }

void check_mapping_consistent(const Graph& g1, const Graph& g2, const GedResult& r) {
  REQUIRE(r.mapping.has_value());
  CHECK(edit_path_cost_from_mapping(g1, g2, *r.mapping) == doctest::Approx(r.value));
}

}  // namespace

TEST_CASE("exact GED examples") {
  CHECK(exact_ged_astar(triangle(), triangle()).value == 0.0);
  CHECK(exact_ged_astar(triangle(), path3()).value == 1.0);
  CHECK(exact_ged_astar(path3(), Graph("s", 1, {})).value == 4.0);
  CHECK(exact_ged_astar(Graph("s", 1, {}), path3()).value == 4.0);
  const auto r = exact_ged_astar(triangle(), path3());
  check_mapping_consistent(triangle(), path3(), r);
  CHECK(r.method == GedMethod::kExactAstar);
}

TEST_CASE("exact GED respects labels") {
  const Graph a("a", 2, {{0, 1}}, {"C", "N"});
  const Graph b("b", 2, {{0, 1}}, {"N", "C"});
  const Graph c("c", 2, {{0, 1}}, {"C", "C"});
  CHECK(exact_ged_astar(a, b).value == 0.0);
  CHECK(exact_ged_astar(a, c).value == 1.0);
}

TEST_CASE("exact GED limits") {
  std::vector<Edge> edges;
  for (NodeId v = 1; v < 11; ++v) edges.push_back({v - 1, v});
  const Graph big("big", 11, edges);
  CHECK_THROWS_AS(exact_ged_astar(big, triangle()), ArgumentError);
  ExactGedOptions wide;
  wide.node_limit = 12;
  CHECK_NOTHROW(exact_ged_astar(big, big, {}, wide));
}

TEST_CASE("exact GED timeout is reported distinctly") {
  Rng rng(5);
  const Graph a = oracle::random_graph(16, 0.5, rng, "a");
  const Graph b = oracle::random_graph(16, 0.5, rng, "b");
  ExactGedOptions opts;
  opts.node_limit = 16;
  opts.timeout = std::chrono::milliseconds(1);
  CHECK_THROWS_AS(exact_ged_astar(a, b, {}, opts), TimeoutError);
}

TEST_CASE("bipartite cost matrix layout") {
  const auto c = bipartite_cost_matrix(path3(), path2());
  REQUIRE(c.rows() == 5);
  REQUIRE(c.cols() == 5);
  // Substitution block: |deg difference|.
  CHECK(c(1, 0) == 1.0);
  CHECK(c(0, 0) == 0.0);
  // Deletion diagonal: 1 + degree; off-diagonal forbidden.
  CHECK(c(1, 2 + 1) == 3.0);
  CHECK(std::isinf(c(0, 2 + 1)));
  // Insertion diagonal.
  CHECK(c(3 + 0, 0) == 2.0);
  CHECK(std::isinf(c(3 + 0, 1)));
  // Dummy block.
  CHECK(c(3, 2) == 0.0);
}

TEST_CASE("two-by-two assignment example") {
  Eigen::MatrixXd c(2, 2);
  c << 1, 2, 2, 1;
  CHECK(solve_hungarian(c).cost == 2.0);
  CHECK(solve_jonker_volgenant(c).cost == 2.0);
}

TEST_CASE("approximations on small examples") {
  for (auto solver : {AssignmentSolver::kHungarian, AssignmentSolver::kJonkerVolgenant}) {
    const auto same = bipartite_ged(triangle(), triangle(), {}, solver);
    CHECK(same.value == 0.0);
    const auto r = bipartite_ged(triangle(), path3(), {}, solver);
    CHECK(r.value >= 1.0);
    check_mapping_consistent(triangle(), path3(), r);
  }
  CHECK(beam_ged(triangle(), triangle(), {}, 1).value == 0.0);
  CHECK(beam_ged(triangle(), path3(), {}, 5040).value == 1.0);
  check_mapping_consistent(triangle(), path3(), beam_ged(triangle(), path3()));
  CHECK_THROWS_AS(beam_ged(triangle(), path3(), {}, 0), ArgumentError);
}

TEST_CASE("edit_path_cost_from_mapping examples") {
  NodeMapping identity{{0, 1, 2}};
  CHECK(edit_path_cost_from_mapping(triangle(), triangle(), identity) == 0.0);
  CHECK(edit_path_cost_from_mapping(triangle(), path3(), identity) == 1.0);
  NodeMapping all_deleted{{-1, -1}};
  CHECK(edit_path_cost_from_mapping(path2(), path2(), all_deleted) == 6.0);
  CHECK_THROWS_AS(edit_path_cost_from_mapping(path3(), path3(), NodeMapping{{0, 0, 1}}), ArgumentError);
  CHECK_THROWS_AS(edit_path_cost_from_mapping(path3(), path3(), NodeMapping{{0, 1}}), ArgumentError);
  CHECK_THROWS_AS(edit_path_cost_from_mapping(path3(), path3(), NodeMapping{{0, 1, 3}}), ArgumentError);
}

TEST_CASE("edit path cost agrees with the independent counter") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Graph a = oracle::random_graph(1 + trial % 6, 0.5, rng, "a");
    const Graph b = oracle::random_graph(1 + (trial / 6) % 6, 0.5, rng, "b");
    std::vector<int> targets(b.node_count());
    std::iota(targets.begin(), targets.end(), 0);
    std::shuffle(targets.begin(), targets.end(), rng);
    NodeMapping m;
    std::vector<int> f;
    for (std::size_t u = 0; u < a.node_count(); ++u) {
      const int t = (u < targets.size() && rng() % 3 != 0) ? targets[u] : -1;
      m.target.push_back(t);
      f.push_back(t);
    }
    CHECK(edit_path_cost_from_mapping(a, b, m) == oracle::edit_cost(a, b, f));
  }
}

TEST_CASE("custom cost model") {
  EditCostModel cost;
  cost.edge_delete = 2.0;
  CHECK(exact_ged_astar(triangle(), path3(), cost).value == 2.0);
  CHECK(cost.substitution_dominates());
}

TEST_CASE("method names") {
  CHECK(parse_ged_method("exact") == GedMethod::kExactAstar);
  CHECK(parse_ged_method("exact_astar") == GedMethod::kExactAstar);
  CHECK(parse_ged_method("hungarian") == GedMethod::kHungarian);
  CHECK(parse_ged_method("vj") == GedMethod::kVj);
  CHECK(parse_ged_method("beam") == GedMethod::kBeam);
  CHECK(parse_ged_method("trim_bound") == GedMethod::kTrimBound);
  CHECK_THROWS_AS(parse_ged_method("astar2"), ArgumentError);
  CHECK(std::string(to_string(GedMethod::kVj)) == "vj");
}

TEST_CASE("nged_similarity") {
  const auto zero = nged_similarity(0, 60, 60);
  CHECK(zero.nged == 0.0);
  CHECK(zero.sim == 1.0);
  const auto six = nged_similarity(6, 60, 60);
  CHECK(six.nged == 0.1);
  CHECK(std::abs(six.sim - 0.904837418035959573) < 1e-12);
  CHECK(nged_similarity(3, 4, 6).nged == doctest::Approx(0.6));
  CHECK_THROWS_AS(nged_similarity(-1, 3, 3), ArgumentError);
  CHECK_THROWS_AS(nged_similarity(1, 0, 3), ArgumentError);
  double previous = 2.0;
  for (int ged = 0; ged <= 30; ++ged) {
    const double s = nged_similarity(ged, 10, 12).sim;
    CHECK(s > 0.0);
    CHECK(s <= 1.0);
    CHECK(s < previous);
    previous = s;
  }
}
