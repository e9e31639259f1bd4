#include <benchmark/benchmark.h>

#include "psim/dataset.hpp"
#include "psim/fluidc.hpp"

using namespace psim;

namespace {

void BM_FluidC(benchmark::State& state) {
  const Graph g = generate_ba(static_cast<std::size_t>(state.range(0)), 1, 3, "g");
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(fluidc(g, 3, seed++).sweeps);
}
BENCHMARK(BM_FluidC)->Arg(60)->Arg(200)->Arg(1000)->Unit(benchmark::kMicrosecond);

}  // namespace
