// OpenMP kernels vs the serial reference on CIFAR-shaped workloads.
// Run with --benchmark_filter=conv to narrow; OMP_NUM_THREADS controls the
// parallel side.

#include <benchmark/benchmark.h>

#include "anodev2/layers.hpp"
#include "anodev2/reference.hpp"
#include "anodev2/rng.hpp"
#include "anodev2/tensor.hpp"

using namespace anodev2;

namespace {

Tensor4 normal_tensor(int64_t n, int64_t c, int64_t h, int64_t w,
                      uint64_t seed) {
  Rng rng(seed);
  Tensor4 t(n, c, h, w);
  for (auto& v : t.v) v = static_cast<real_t>(rng.normal());
  return t;
}

// resnet4 body shape: 3x3 conv, 16 channels, 32x32, batch 64.
struct ConvCase {
  Tensor4 x = normal_tensor(64, 16, 32, 32, 1);
  Tensor4 w = normal_tensor(16, 16, 3, 3, 2);
  Tensor4 gy = normal_tensor(64, 16, 32, 32, 3);
};

void bm_conv2d_omp(benchmark::State& state) {
  ConvCase c;
  for (auto _ : state)
    benchmark::DoNotOptimize(conv2d(c.x, c.w, nullptr, 1, 1));
}

void bm_conv2d_serial(benchmark::State& state) {
  ConvCase c;
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::conv2d(c.x, c.w, nullptr, 1, 1));
}

void bm_conv2d_backward_omp(benchmark::State& state) {
  ConvCase c;
  for (auto _ : state)
    benchmark::DoNotOptimize(conv2d_backward(c.x, c.w, false, 1, 1, c.gy));
}

void bm_conv2d_backward_serial(benchmark::State& state) {
  ConvCase c;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        reference::conv2d_backward(c.x, c.w, false, 1, 1, c.gy));
}

void bm_batchnorm_omp(benchmark::State& state) {
  ConvCase c;
  BnParams p(16);
  for (auto _ : state) {
    BnCache cache;
    benchmark::DoNotOptimize(batchnorm2d_train(c.x, p, cache, false));
  }
}

void bm_batchnorm_serial(benchmark::State& state) {
  ConvCase c;
  BnParams p(16);
  for (auto _ : state) {
    BnCache cache;
    benchmark::DoNotOptimize(reference::batchnorm2d_train(c.x, p, cache, false));
  }
}

void bm_batchnorm_backward_omp(benchmark::State& state) {
  ConvCase c;
  BnParams p(16);
  BnCache cache;
  batchnorm2d_train(c.x, p, cache, false);
  for (auto _ : state)
    benchmark::DoNotOptimize(batchnorm2d_backward(c.x, p, cache, c.gy));
}

void bm_batchnorm_backward_serial(benchmark::State& state) {
  ConvCase c;
  BnParams p(16);
  BnCache cache;
  batchnorm2d_train(c.x, p, cache, false);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        reference::batchnorm2d_backward(c.x, p, cache, c.gy));
}

void bm_maxpool_omp(benchmark::State& state) {
  const Tensor4 x = normal_tensor(64, 16, 32, 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(maxpool2d(x, 2, 2));
}

void bm_maxpool_serial(benchmark::State& state) {
  const Tensor4 x = normal_tensor(64, 16, 32, 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(reference::maxpool2d(x, 2, 2));
}

void bm_linear_omp(benchmark::State& state) {
  const Tensor4 x = normal_tensor(64, 4096, 1, 1, 5);
  Rng rng(6);
  std::vector<real_t> w(384 * 4096), b(384);
  for (auto& v : w) v = static_cast<real_t>(rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(linear(x, w, b, 384));
}

void bm_linear_serial(benchmark::State& state) {
  const Tensor4 x = normal_tensor(64, 4096, 1, 1, 5);
  Rng rng(6);
  std::vector<real_t> w(384 * 4096), b(384);
  for (auto& v : w) v = static_cast<real_t>(rng.normal());
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::linear(x, w, b, 384));
}

BENCHMARK(bm_conv2d_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_conv2d_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_conv2d_backward_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_conv2d_backward_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_batchnorm_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_batchnorm_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_batchnorm_backward_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_batchnorm_backward_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_maxpool_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_maxpool_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_linear_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_linear_serial)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
