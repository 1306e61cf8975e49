#include <benchmark/benchmark.h>

#include "styleforge/ops.hpp"
#include "styleforge/tensor.hpp"

using namespace styleforge;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  Tensor t(s);
  SplitMix64 rng(seed);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// args: channels in, channels out, kernel, stride, height, width
void BM_Conv2d(benchmark::State& state) {
  const int ci = state.range(0), co = state.range(1), k = state.range(2), s = state.range(3);
  const int h = state.range(4), w = state.range(5);
  const Tensor x = random_tensor({1, ci, h, w}, 1);
  ConvSpec spec = ConvSpec::zeros(ci, co, k, s, Padding::reflect);
  spec.weight = random_tensor(spec.weight.shape(), 2);
  for (auto _ : state) {
    Tensor y = conv2d(x, spec);
    benchmark::DoNotOptimize(y.ptr());
  }
  const double macs = double(co) * ci * k * k * conv_output_extent(h, s) * conv_output_extent(w, s);
  state.counters["GMAC/s"] =
      benchmark::Counter(macs * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv2d)
    ->Args({3, 32, 9, 1, 320, 480})
    ->Args({32, 48, 3, 2, 320, 480})
    ->Args({48, 64, 3, 2, 160, 240})
    ->Args({64, 64, 3, 1, 80, 120})
    ->Args({64, 48, 3, 1, 160, 240})
    ->Args({48, 32, 3, 1, 320, 480})
    ->Args({32, 3, 9, 1, 320, 480})
    ->Args({4, 4, 3, 1, 320, 480})
    ->Unit(benchmark::kMillisecond);

void BM_InstanceNorm(benchmark::State& state) {
  const int c = state.range(0);
  const Tensor x = random_tensor({1, c, 160, 240}, 3);
  std::vector<float> gamma(c, 1.0f), beta(c, 0.0f);
  for (auto _ : state) {
    Tensor y = instance_norm(x, std::span<const float>(gamma), std::span<const float>(beta));
    benchmark::DoNotOptimize(y.ptr());
  }
}
BENCHMARK(BM_InstanceNorm)->Arg(16)->Arg(48)->Unit(benchmark::kMicrosecond);

void BM_ResizeBilinear(benchmark::State& state) {
  const Tensor x = random_tensor({1, 3, 360, 640}, 4);
  for (auto _ : state) {
    Tensor y = resize_bilinear(x, 320, 480);
    benchmark::DoNotOptimize(y.ptr());
  }
}
BENCHMARK(BM_ResizeBilinear)->Unit(benchmark::kMicrosecond);

}  // namespace
