// Parallel (im2col + GEMM) kernels against the serial reference loops.
//
//   ./build/bench/kernel_bench --benchmark_filter=conv

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "moodval/kernels.hpp"

namespace k = moodval::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

// Roughly the first clip-encoder block at the default geometry.
k::ConvShape conv_shape(std::size_t batch) {
  k::ConvShape s;
  s.batch = batch;
  s.in_channels = 8;
  s.out_channels = 8;
  s.in_size = {5, 16, 16};
  s.kernel = {3, 3, 3};
  s.padding = {1, 1, 1};
  return s;
}

template <auto Forward>
void conv_forward(benchmark::State& state) {
  const auto s = conv_shape(static_cast<std::size_t>(state.range(0)));
  const auto x = noise(s.batch * s.in_channels * s.in_plane(), 1);
  const auto w = noise(s.out_channels * s.patch(), 2);
  const auto b = noise(s.out_channels, 3);
  std::vector<double> y(s.batch * s.out_channels * s.out_plane());
  for (auto _ : state) {
    Forward(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.batch));
}

template <auto Backward>
void conv_backward(benchmark::State& state) {
  const auto s = conv_shape(static_cast<std::size_t>(state.range(0)));
  const auto x = noise(s.batch * s.in_channels * s.in_plane(), 1);
  const auto w = noise(s.out_channels * s.patch(), 2);
  const auto go = noise(s.batch * s.out_channels * s.out_plane(), 3);
  std::vector<double> gx(x.size()), gw(w.size()), gb(s.out_channels);
  for (auto _ : state) {
    Backward(s, x, w, go, gx, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.batch));
}

template <auto Forward>
void linear_forward(benchmark::State& state) {
  k::LinearShape s{static_cast<std::size_t>(state.range(0)), 512, 256};
  const auto x = noise(s.batch * s.in_features, 1);
  const auto w = noise(s.out_features * s.in_features, 2);
  const auto b = noise(s.out_features, 3);
  std::vector<double> y(s.batch * s.out_features);
  for (auto _ : state) {
    Forward(s, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.batch));
}

}  // namespace

BENCHMARK(conv_forward<k::reference::conv3d_forward>)->Name("conv_forward/reference")->Arg(8)->Arg(32);
BENCHMARK(conv_forward<k::parallel::conv3d_forward>)->Name("conv_forward/parallel")->Arg(8)->Arg(32);
BENCHMARK(conv_backward<k::reference::conv3d_backward>)->Name("conv_backward/reference")->Arg(8)->Arg(32);
BENCHMARK(conv_backward<k::parallel::conv3d_backward>)->Name("conv_backward/parallel")->Arg(8)->Arg(32);
BENCHMARK(linear_forward<k::reference::linear_forward>)->Name("linear_forward/reference")->Arg(64)->Arg(256);
BENCHMARK(linear_forward<k::parallel::linear_forward>)->Name("linear_forward/parallel")->Arg(64)->Arg(256);

BENCHMARK_MAIN();
