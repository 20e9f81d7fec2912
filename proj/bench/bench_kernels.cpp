// Serial reference against the OpenMP path for each kernel.

#include <benchmark/benchmark.h>

#include <random>

#include "shrl/kernels.hpp"
#include "shrl/testing.hpp"

using namespace shrl;
using kernels::Exec;

namespace {

Exec execOf(const benchmark::State &state) { return state.range(1) ? Exec::Parallel : Exec::Serial; }

// n cars spread over the four lanes of a 1 km straight road.
perception::Scene crowd(const Road &road, int n) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> x(5.0, 995.0);
  std::vector<perception::SceneVehicle> cars;
  for (int i = 0; i < n; ++i) cars.push_back(testing::carAt(i, i % 4, x(rng)));
  return testing::sceneOf(road, std::move(cars));
}

void BM_Rays(benchmark::State &state) {
  const Road road(testing::straightLanes(4, 1000.0));
  const int n = static_cast<int>(state.range(0));
  const auto scene = crowd(road, n);
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  const perception::RayConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::castRaysBatch(scene, ids, config, execOf(state)));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Rays)->ArgsProduct({{8, 64, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_OverlappingPairs(benchmark::State &state) {
  const Road road(testing::straightLanes(4, 1000.0));
  const auto scene = crowd(road, static_cast<int>(state.range(0)));
  std::vector<dynamics::Corners> rects;
  for (const auto &v : scene.vehicles) rects.push_back(dynamics::corners(v.state));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::overlappingPairs(rects, execOf(state)));
}
BENCHMARK(BM_OverlappingPairs)->ArgsProduct({{8, 64, 512}, {0, 1}})->Unit(benchmark::kMicrosecond);

void BM_Matmul(benchmark::State &state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  std::vector<double> a(static_cast<std::size_t>(n * n)), b(a.size()), c(a.size());
  for (auto &v : a) v = g(rng);
  for (auto &v : b) v = g(rng);
  for (auto _ : state) {
    kernels::matmul(a.data(), b.data(), c.data(), n, n, n, execOf(state));
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2L * n * n * n);
}
BENCHMARK(BM_Matmul)->ArgsProduct({{32, 128, 256}, {0, 1}})->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
