#include <benchmark/benchmark.h>

#include <random>

#include "fairhyp/conv.hpp"
#include "fairhyp/layers.hpp"
#include "fairhyp/metrics.hpp"
#include "fairhyp/pipelines.hpp"
#include "fairhyp/scss.hpp"
#include "fairhyp/spectral.hpp"

using namespace fairhyp;

namespace {

Tensor<float> noise(const Shape& s, std::uint64_t seed) {
  Tensor<float> t(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& v : t.data()) v = u(rng);
  return t;
}

void BM_Conv3d(benchmark::State& state) {
  const std::size_t C = static_cast<std::size_t>(state.range(0));
  const auto x = noise(Shape{C, 16, 32, 32}, 1);
  const auto w = noise(Shape{C, C * 27}, 2);
  const ConvSpec spec{3, 3, 3};
  for (auto _ : state) benchmark::DoNotOptimize(conv3d(x, w, spec));
  state.counters["FLOP/s"] = benchmark::Counter(
      static_cast<double>(conv_flops(Dims4{C, 16, 32, 32}, C, spec, false)), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv3d)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SelectiveScan(benchmark::State& state) {
  const std::size_t L = static_cast<std::size_t>(state.range(0)), C = 8, N = 16;
  ScanParams<float> p;
  p.dt_weight = noise(Shape{C, C}, 3);
  p.dt_bias = noise(Shape{C}, 4);
  p.b_weight = noise(Shape{N, C}, 5);
  p.c_weight = noise(Shape{N, C}, 6);
  p.a_log = noise(Shape{C, N}, 7);
  p.skip = noise(Shape{C}, 8);
  const auto tokens = noise(Shape{L, C}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(selective_scan(tokens, p, ScanDirection::kForward));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * L));
}
BENCHMARK(BM_SelectiveScan)->Arg(31)->Arg(256)->Arg(4096);

void BM_NetworkInfer(benchmark::State& state) {
  const std::size_t S = static_cast<std::size_t>(state.range(0));
  NetworkConfig c;
  c.bands = 16;
  auto b = build<float>(c, 1);
  const auto x = noise(Shape{16, S, S}, 10);
  for (auto _ : state) benchmark::DoNotOptimize(b.network.infer(b.params, x));
  state.counters["FLOP/s"] = benchmark::Counter(static_cast<double>(b.network.count_cost(x.shape()).flops),
                                                benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_NetworkInfer)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto a = noise(Shape{31, 64, 64}, 11), b = noise(Shape{31, 64, 64}, 12);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b, 1.0));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

void BM_BandCorrelation(benchmark::State& state) {
  const auto a = noise(Shape{static_cast<std::size_t>(state.range(0)), 64, 64}, 13);
  for (auto _ : state) benchmark::DoNotOptimize(band_correlation(a));
}
BENCHMARK(BM_BandCorrelation)->Arg(31)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
