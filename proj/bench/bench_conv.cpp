// OpenMP column kernels against the serial direct-loop reference.

#include <benchmark/benchmark.h>

#include <random>

#include "fisheyehdk/dconv.hpp"
#include "fisheyehdk/dconv_reference.hpp"
#include "fisheyehdk/hdk.hpp"

namespace {

using namespace fhdk;

struct Problem {
  Tensor input;
  ConvParams params;
  KernelField field;
};

Problem make_problem(int size, int channels) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Problem p;
  p.input = Tensor({1, channels, size, size});
  for (double& v : p.input.values()) v = u(rng);
  p.params = make_conv_params(channels, channels, 3);
  for (double& v : p.params.weight.values()) v = 0.1 * u(rng);
  p.field = zero_kernel_field(1, size, size, 3, 3);
  for (double& v : p.field.data.values()) v = 1.5 * u(rng);
  return p;
}

void BM_Conv2dParallel(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(p.input, p.params));
}

void BM_Conv2dReference(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  for (auto _ : state) benchmark::DoNotOptimize(reference::conv2d(p.input, p.params));
}

void BM_DeformConv2dParallel(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  for (auto _ : state) benchmark::DoNotOptimize(deform_conv2d(p.input, p.field, p.params));
}

void BM_DeformConv2dReference(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  for (auto _ : state) benchmark::DoNotOptimize(reference::deform_conv2d(p.input, p.field, p.params, false));
}

void BM_DeformConv2dBackward(benchmark::State& state) {
  const Problem p = make_problem(static_cast<int>(state.range(0)), 16);
  const Tensor grad(p.input.shape(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(deform_conv2d_backward(p.input, p.field, p.params, grad));
}

void BM_HdkForward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Problem p = make_problem(size, 16);
  const HdkParams hp = init_hdk_params(16, HdkConfig{}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(hdk_forward(p.input, hp));
}

BENCHMARK(BM_Conv2dParallel)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_Conv2dReference)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_DeformConv2dParallel)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_DeformConv2dReference)->Arg(32)->Arg(64)->Arg(128);
BENCHMARK(BM_DeformConv2dBackward)->Arg(32)->Arg(64);
BENCHMARK(BM_HdkForward)->Arg(32)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
