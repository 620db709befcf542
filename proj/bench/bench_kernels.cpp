// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stefnet/kernels.hpp"

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

stefnet::kernels::ConvShape conv_shape(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto channels = static_cast<std::size_t>(state.range(1));
  return {side, side, channels, 4 * channels, 3, 3};
}

template <bool Parallel>
void BM_Conv2d(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto in = random_vector(s.width * s.height * s.in_channels, 1);
  const auto k = random_vector(s.kernel_w * s.kernel_h * s.in_channels * s.out_channels, 2);
  const auto b = random_vector(s.out_channels, 3);
  std::vector<double> out(s.width * s.height * s.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      stefnet::kernels::parallel::conv2d(in, k, b, out, s);
    } else {
      stefnet::kernels::serial::conv2d(in, k, b, out, s);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 4);
  const auto b = random_vector(n * n, 5);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      stefnet::kernels::parallel::matmul(a, b, c, n, n, n);
    } else {
      stefnet::kernels::serial::matmul(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv2d<false>)->Args({10, 9})->Args({20, 65});
BENCHMARK(BM_Conv2d<true>)->Args({10, 9})->Args({20, 65});
BENCHMARK(BM_Matmul<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
