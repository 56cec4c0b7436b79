#include <benchmark/benchmark.h>

#include "toposeg/losses.hpp"
#include "toposeg/metrics.hpp"
#include "toposeg/rng.hpp"
#include "toposeg/synth.hpp"
#include "toposeg/trainer.hpp"

namespace {

using namespace toposeg;

Tensor random_prob(std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(side * side);
  for (double& x : v) x = rng.uniform(0.05, 0.95);
  return Tensor({1, side, side}, std::move(v));
}

BinaryMask synthetic_mask(std::size_t side) {
  SynthConfig cfg;
  cfg.height = cfg.width = side;
  cfg.samples = 1;
  return synth_generate(cfg).front().mask;
}

void BM_SoftSkeleton(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor p = random_prob(side, 1);
  for (auto _ : state) benchmark::DoNotOptimize(soft_skeleton(p, SkeletonConfig{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_SoftSkeleton)->Arg(64)->Arg(128)->Arg(256);

void BM_DistanceTransform(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const BinaryMask m = synthetic_mask(side);
  for (auto _ : state) benchmark::DoNotOptimize(distance_transform(m));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(side * side));
}
BENCHMARK(BM_DistanceTransform)->Arg(64)->Arg(256)->Arg(512);

void BM_CombinedLossForwardBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor p = random_prob(side, 2);
  const Tensor y = synthetic_mask(side).to_tensor();
  for (auto _ : state) {
    Tape tape;
    const Var v = tape.variable(p);
    const LossBreakdown loss = combined_loss(v, y, LossWeights{}, SkeletonConfig{});
    benchmark::DoNotOptimize(tape.backward(loss.total));
  }
}
BENCHMARK(BM_CombinedLossForwardBackward)->Arg(64)->Arg(128);

void BM_EvaluateImage(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Tensor p = random_prob(side, 3);
  const BinaryMask gt = synthetic_mask(side);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_image("bench", p, gt));
}
BENCHMARK(BM_EvaluateImage)->Arg(64)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.seeds = {0};
  cfg.steps = 1'000'000;
  const DataSplit data = make_split(cfg);
  TrainSession session(cfg, 0, data);
  for (auto _ : state) benchmark::DoNotOptimize(session.step());
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
