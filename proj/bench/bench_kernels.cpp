// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "vidseq/kernels.hpp"
#include "vidseq/vlad.hpp"

namespace {

using namespace vidseq;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{n, n, n, false, true};
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::gemm(s, a, b, c, false);
    else kernels::reference::gemm(s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Conv1d(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const kernels::Conv1dShape s{4, channels, channels, 120, 3};
  const auto x = random_values(4 * channels * 120, 3);
  const auto w = random_values(channels * channels * 3, 4);
  const auto bias = random_values(channels, 5);
  std::vector<double> y(4 * channels * 120);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::conv1d_forward(s, x, w, bias, y);
    else kernels::reference::conv1d_forward(s, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t k = 64, d = 128;
  const vlad::Codebook cb{k, d, random_values(k * d, 6)};
  const auto samples = random_values(rows * d, 7);
  std::vector<std::size_t> labels(rows);
  std::vector<double> dist(rows);
  for (auto _ : state) {
    if constexpr (Parallel) vlad::assign_nearest(cb, {samples, rows, d}, labels, dist);
    else vlad::reference::assign_nearest(cb, {samples, rows, d}, labels, dist);
    benchmark::DoNotOptimize(labels.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Conv1d<false>)->Name("conv1d/reference")->Arg(32)->Arg(128);
BENCHMARK(BM_Conv1d<true>)->Name("conv1d/parallel")->Arg(32)->Arg(128);
BENCHMARK(BM_AssignNearest<false>)->Name("assign_nearest/reference")->Arg(1000)->Arg(10000);
BENCHMARK(BM_AssignNearest<true>)->Name("assign_nearest/parallel")->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
