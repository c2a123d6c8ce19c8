#include "cobt/changepoint.hpp"
#include "cobt/dmp.hpp"
#include "cobt/pipeline.hpp"
#include "cobt/primitives.hpp"
#include "cobt/tasks.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace cobt;

std::vector<double> noisy_steps(std::size_t n) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = (i / (n / 5)) % 2 ? 0.2 : 0.05;
  for (auto& v : x) v += noise(rng);
  return x;
}

void BM_Pelt(benchmark::State& state) {
  const auto x = noisy_steps(static_cast<std::size_t>(state.range(0)));
  const double penalty = default_penalty(x);
  for (auto _ : state) benchmark::DoNotOptimize(pelt(x, {penalty, 2}));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Pelt)->Arg(250)->Arg(500)->Arg(1000)->Arg(2000)->Arg(4000)->Complexity();

const std::vector<PoseSample>& reach_segment() {
  static const std::vector<PoseSample> seg = [] {
    const TaskFixture fx = pick_and_place_fixture();
    const Demonstration demo = fx.demo();
    const SegmentedDataset s = segment(demo, fx.target, fx.goal);
    return segment_samples(demo, s.boundaries[0], s.boundaries[1]);
  }();
  return seg;
}

void BM_DmpTrain(benchmark::State& state) {
  const auto& seg = reach_segment();
  for (auto _ : state) benchmark::DoNotOptimize(train_dmp(seg));
}
BENCHMARK(BM_DmpTrain);

void BM_DmpRollout(benchmark::State& state) {
  const auto& seg = reach_segment();
  const DmpModel m = train_dmp(seg);
  Pose7 goal = seg.back().pose;
  goal.position.x() += 0.1;
  for (auto _ : state) benchmark::DoNotOptimize(rollout(m, seg.front().pose, goal, {2.0, 0.01, {}}));
}
BENCHMARK(BM_DmpRollout);

void BM_LearnSkill(benchmark::State& state) {
  const TaskFixture fx = state.range(0) ? long_pick_and_place_fixture(30.0) : pick_and_place_fixture();
  const Demonstration demo = fx.demo();
  for (auto _ : state) benchmark::DoNotOptimize(learn_skill(demo, fx.target, fx.goal, "bench"));
  state.SetLabel(state.range(0) ? "30 s demo" : "fixture demo");
}
BENCHMARK(BM_LearnSkill)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ExecuteSkill(benchmark::State& state) {
  const TaskFixture fx = drawer_fixture();
  const LearnResult r = learn_skill(fx.demo(), fx.target, fx.goal, "drawer");
  const Program p = program_of(r.record);
  SessionConfig cfg;
  cfg.record_nodes = false;
  long ticks = 0;
  for (auto _ : state) {
    ExecutionSession s(p, fx.scene.world, cfg);
    ticks += s.run_to_completion().ticks();
  }
  state.counters["ticks/s"] = benchmark::Counter(static_cast<double>(ticks), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_ExecuteSkill)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
