#include <benchmark/benchmark.h>

#include "psim/dataset.hpp"
#include "psim/fluidc.hpp"
#include "psim/model.hpp"

using namespace psim;

namespace {

// Inference on one BA-200 pair; the argument is m.
void BM_Forward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.m = static_cast<int>(state.range(0));
  const PSimGnn model(cfg);
  const auto p1 = fluidc(generate_ba(200, 1, 1, "a"), 3, 2);
  const auto p2 = fluidc(generate_ba(200, 1, 3, "b"), 3, 4);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(model.forward(tape, p1, p2).scalar());
  }
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(3)->Arg(9)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.m = static_cast<int>(state.range(0));
  PSimGnn model(cfg);
  const auto p1 = fluidc(generate_ba(60, 1, 1, "a"), 3, 2);
  const auto p2 = fluidc(generate_ba(60, 1, 3, "b"), 3, 4);
  for (auto _ : state) {
    model.parameters().zero_grad();
    Tape tape(true);
    const Var s = model.forward(tape, p1, p2);
    tape.backward(s);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(0)->Arg(9)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
