#include <benchmark/benchmark.h>

#include "elastic/arch.hpp"
#include "elastic/block.hpp"
#include "elastic/cost.hpp"
#include "elastic/ops.hpp"
#include "elastic/policy.hpp"
#include "elastic/rng.hpp"
#include "elastic/tensor.hpp"

namespace {

using namespace elastic;

TensorRef randn(Shape s, Pcg32& rng, float scale = 1.0f) {
  auto t = Tensor::create(s);
  for (auto& v : t->data) {
    v = scale * static_cast<float>(rng.next_gaussian());
  }
  return t;
}

void BM_Conv3x3Grouped(benchmark::State& state) {
  NoGradGuard guard;
  Pcg32 rng(1, 1);
  i64 c = state.range(0);
  auto p = ConvParams::create(c, c, 3, 1, 1, 32, false, rng);
  auto x = randn({1, c, 28, 28}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, p));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Conv3x3Grouped)->Arg(128)->Arg(256);

void BM_Conv1x1(benchmark::State& state) {
  NoGradGuard guard;
  Pcg32 rng(2, 1);
  i64 c = state.range(0);
  auto p = ConvParams::create(c, c, 1, 1, 0, 1, false, rng);
  auto x = randn({1, c, 28, 28}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, p));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Conv1x1)->Arg(128)->Arg(256);

BlockParams two_branch_block(Pcg32& rng) {
  ElasticBlockSpec spec;
  spec.kind = BlockKind::resnext_bottleneck;
  spec.in_channels = spec.out_channels = 128;
  spec.bottleneck_channels = 64;
  spec.branches = {{1, Rational(1, 2), 8}, {2, Rational(1, 2), 8}};
  return make_block(spec, rng);
}

void BM_ElasticBlockForward(benchmark::State& state) {
  NoGradGuard guard;
  Pcg32 rng(3, 1);
  auto params = two_branch_block(rng);
  auto x = randn({1, 128, 28, 28}, rng, 0.5f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(block_forward(x, params));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ElasticBlockForward);

void BM_ElasticBlockBackward(benchmark::State& state) {
  Pcg32 rng(4, 1);
  auto params = two_branch_block(rng);
  auto x = randn({1, 128, 28, 28}, rng, 0.5f);
  x->requires_grad = true;
  for (auto _ : state) {
    auto loss = sum(block_forward(x, params));
    backward(loss);
    x->zero_grad();
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ElasticBlockBackward);

void BM_BilinearHalve(benchmark::State& state) {
  NoGradGuard guard;
  Pcg32 rng(5, 1);
  auto x = randn({1, 128, 56, 56}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bilinear_resize(x, 28, 28));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BilinearHalve);

void BM_ScaleScore(benchmark::State& state) {
  Pcg32 rng(6, 1);
  auto high = randn({1, 64, 56, 56}, rng);
  auto low = randn({1, 64, 28, 28}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(block_scale_score(*high, *low));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ScaleScore);

void BM_ModelCostWalk(benchmark::State& state) {
  auto spec = preset("resnext50_elastic");
  for (auto _ : state) {
    benchmark::DoNotOptimize(model_cost(spec));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ModelCostWalk);

}  // namespace

BENCHMARK_MAIN();
