#include <benchmark/benchmark.h>

#include "styleforge/stylenet.hpp"

using namespace styleforge;

namespace {

// args: alpha * 1000, beta * 1000, variant, height, width
void BM_Forward(benchmark::State& state) {
  const ArchConfig config{state.range(0) / 1000.0f, state.range(1) / 1000.0f,
                          static_cast<Variant>(state.range(2))};
  const StyleNetModel model = build(config, 7);
  Tensor frame(1, 3, state.range(3), state.range(4), 0.5f);
  for (auto _ : state) {
    StyleNetOutput out = forward(model, frame);
    benchmark::DoNotOptimize(out.image.ptr());
  }
  state.counters["fps"] = benchmark::Counter(state.iterations(), benchmark::Counter::kIsRate);
  state.counters["params"] = static_cast<double>(param_count(config));
}
BENCHMARK(BM_Forward)
    ->Args({1000, 1000, 1, 320, 480})
    ->Args({1000, 750, 0, 320, 480})
    ->Args({500, 750, 0, 320, 480})
    ->Args({125, 500, 0, 320, 480})
    ->Args({125, 500, 0, 240, 320})
    ->Unit(benchmark::kMillisecond);

}  // namespace
