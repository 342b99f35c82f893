// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>

#include "fiberseg/convolution.hpp"
#include "fiberseg/vesselness.hpp"

using namespace fiberseg;

namespace {

Volume random_volume(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Volume v(GridSpec(n, n, n, 1.0));
  for (auto& x : v.values()) x = u(rng);
  return v;
}

void set_voxels(benchmark::State& state, std::size_t n) {
  state.SetItemsProcessed(state.iterations() * std::int64_t(n * n * n));
}

void BM_BlurSerial(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto v = random_volume(n);
  for (auto _ : state) benchmark::DoNotOptimize(reference::gaussian_blur(v, 2.0));
  set_voxels(state, n);
}

void BM_BlurParallel(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto v = random_volume(n);
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_blur(v, 2.0));
  set_voxels(state, n);
}

void BM_HessianSerial(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto v = random_volume(n);
  for (auto _ : state) benchmark::DoNotOptimize(reference::hessian_at_scale(v, 1.5));
  set_voxels(state, n);
}

void BM_HessianParallel(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto v = random_volume(n);
  for (auto _ : state) benchmark::DoNotOptimize(hessian_at_scale(v, 1.5));
  set_voxels(state, n);
}

void BM_FrangiSerial(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto v = random_volume(n);
  const ScaleSet s{{1.0, 1.5, 2.0}};
  for (auto _ : state) benchmark::DoNotOptimize(reference::frangi_multiscale(v, s, {}));
  set_voxels(state, n);
}

void BM_FrangiParallel(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const auto v = random_volume(n);
  const ScaleSet s{{1.0, 1.5, 2.0}};
  for (auto _ : state) benchmark::DoNotOptimize(frangi_multiscale(v, s, {}));
  set_voxels(state, n);
}

}  // namespace

BENCHMARK(BM_BlurSerial)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BlurParallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_HessianSerial)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_HessianParallel)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_FrangiSerial)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrangiParallel)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
