// OpenMP kernels against the serial loop-nest reference on network-sized
// shapes. GZK_THREADS sets the kernel thread count. Each parallel benchmark
// reports the largest absolute difference from the reference as a counter.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>

#include "gzk/kernels.hpp"
#include "gzk/random.hpp"
#include "gzk/reference.hpp"

using namespace gzk;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

double max_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

struct ConvCase {
  Index n, c_in, h, w, c_out, k;
};

// stem 7x7, hourglass 3x3 bottleneck, 1x1 projection
const ConvCase kConv[] = {{4, 1, 64, 96, 32, 7}, {4, 16, 64, 96, 16, 3}, {4, 32, 64, 96, 16, 1}};

void conv_parallel(benchmark::State& state) {
  const auto& c = kConv[state.range(0)];
  const auto d = kernels::ConvDims::make(c.n, c.c_in, c.h, c.w, c.c_out, c.k, 1, c.k / 2);
  const auto x = random_vec(static_cast<std::size_t>(c.n * c.c_in * c.h * c.w), 1);
  const auto w = random_vec(static_cast<std::size_t>(c.c_out * c.c_in * c.k * c.k), 2);
  std::vector<float> y(static_cast<std::size_t>(c.n * c.c_out * d.h_out * d.w_out));
  for (auto _ : state) {
    kernels::conv2d_forward(d, x.data(), w.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  const auto ref = reference::conv2d(x, {c.n, c.c_in, c.h, c.w}, w, {c.c_out, c.c_in, c.k, c.k}, 1, c.k / 2);
  state.counters["max_abs_diff"] = max_diff(y, ref);
  state.counters["threads"] = kernels::num_threads();
}

void conv_reference(benchmark::State& state) {
  const auto& c = kConv[state.range(0)];
  const auto x = random_vec(static_cast<std::size_t>(c.n * c.c_in * c.h * c.w), 1);
  const auto w = random_vec(static_cast<std::size_t>(c.c_out * c.c_in * c.k * c.k), 2);
  for (auto _ : state) {
    auto y = reference::conv2d(x, {c.n, c.c_in, c.h, c.w}, w, {c.c_out, c.c_in, c.k, c.k}, 1, c.k / 2);
    benchmark::DoNotOptimize(y.data());
  }
}

const Shape kPoolShape{4, 32, 64, 96};

template <bool Max>
void pool_parallel(benchmark::State& state) {
  const auto d = kernels::PoolDims::make(4, 32, 64, 96, 2, 2);
  const auto x = random_vec(static_cast<std::size_t>(numel(kPoolShape)), 3);
  std::vector<float> y(static_cast<std::size_t>(d.n * d.c * d.h_out * d.w_out));
  std::vector<std::int32_t> arg(y.size());
  for (auto _ : state) {
    if constexpr (Max)
      kernels::max_pool_forward(d, x.data(), y.data(), arg.data());
    else
      kernels::avg_pool_forward(d, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  const auto ref = Max ? reference::max_pool(x, kPoolShape, 2) : reference::avg_pool(x, kPoolShape, 2);
  state.counters["max_abs_diff"] = max_diff(y, ref);
}

template <bool Max>
void pool_reference(benchmark::State& state) {
  const auto x = random_vec(static_cast<std::size_t>(numel(kPoolShape)), 3);
  for (auto _ : state) {
    auto y = Max ? reference::max_pool(x, kPoolShape, 2) : reference::avg_pool(x, kPoolShape, 2);
    benchmark::DoNotOptimize(y.data());
  }
}

// radius head: 16 samples, 100 -> 100
constexpr Index kFcN = 16, kFcF = 100, kFcG = 100;

void fc_parallel(benchmark::State& state) {
  const auto x = random_vec(kFcN * kFcF, 4), w = random_vec(kFcF * kFcG, 5), b = random_vec(kFcG, 6);
  std::vector<float> y(kFcN * kFcG);
  for (auto _ : state) {
    kernels::matmul(kFcN, kFcF, kFcG, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["max_abs_diff"] = max_diff(y, reference::fully_connected(x, kFcN, kFcF, w, kFcG, b));
}

void fc_reference(benchmark::State& state) {
  const auto x = random_vec(kFcN * kFcF, 4), w = random_vec(kFcF * kFcG, 5), b = random_vec(kFcG, 6);
  for (auto _ : state) {
    auto y = reference::fully_connected(x, kFcN, kFcF, w, kFcG, b);
    benchmark::DoNotOptimize(y.data());
  }
}

const Shape kUpShape{4, 32, 32, 48};

void upsample_parallel(benchmark::State& state) {
  const auto x = random_vec(static_cast<std::size_t>(numel(kUpShape)), 7);
  std::vector<float> y(x.size() * 4);
  for (auto _ : state) {
    kernels::upsample_bilinear_forward<float>(4 * 32, 32, 48, 2, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["max_abs_diff"] = max_diff(y, reference::upsample_bilinear(x, kUpShape, 2));
}

void upsample_reference(benchmark::State& state) {
  const auto x = random_vec(static_cast<std::size_t>(numel(kUpShape)), 7);
  for (auto _ : state) {
    auto y = reference::upsample_bilinear(x, kUpShape, 2);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(conv_parallel)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(conv_reference)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(pool_parallel<true>)->Name("max_pool_parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(pool_reference<true>)->Name("max_pool_reference")->Unit(benchmark::kMicrosecond);
BENCHMARK(pool_parallel<false>)->Name("avg_pool_parallel")->Unit(benchmark::kMicrosecond);
BENCHMARK(pool_reference<false>)->Name("avg_pool_reference")->Unit(benchmark::kMicrosecond);
BENCHMARK(fc_parallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(fc_reference)->Unit(benchmark::kMicrosecond);
BENCHMARK(upsample_parallel)->Unit(benchmark::kMicrosecond);
BENCHMARK(upsample_reference)->Unit(benchmark::kMicrosecond);

int main(int argc, char** argv) {
  kernels::configure_threads_from_env();
  kernels::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
