#include <benchmark/benchmark.h>

#include "psim/dataset.hpp"
#include "psim/ged.hpp"

using namespace psim;

namespace {

std::pair<Graph, Graph> pair_of(std::size_t n) {
  const Graph g = generate_ba(n, 1, 7, "g");
  return {g, trim(g, 6, 8, "t").graph};
}

void BM_ExactAstar(benchmark::State& state) {
  const auto [a, b] = pair_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(exact_ged_astar(a, b, {}, {.node_limit = 16}).value);
}
BENCHMARK(BM_ExactAstar)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Hungarian(benchmark::State& state) {
  const auto [a, b] = pair_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(bipartite_ged(a, b, {}, AssignmentSolver::kHungarian).value);
}
BENCHMARK(BM_Hungarian)->Arg(60)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_JonkerVolgenant(benchmark::State& state) {
  const auto [a, b] = pair_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(bipartite_ged(a, b, {}, AssignmentSolver::kJonkerVolgenant).value);
  }
}
BENCHMARK(BM_JonkerVolgenant)->Arg(60)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_Beam(benchmark::State& state) {
  const auto [a, b] = pair_of(60);
  const auto width = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(beam_ged(a, b, {}, width).value);
}
BENCHMARK(BM_Beam)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace
