#include <benchmark/benchmark.h>

#include "flowcryst/basedist.hpp"
#include "flowcryst/crystal.hpp"
#include "flowcryst/engine.hpp"
#include "flowcryst/flowmatch.hpp"
#include "flowcryst/geometry.hpp"
#include "flowcryst/metrics.hpp"
#include "flowcryst/net.hpp"
#include "flowcryst/synthetic.hpp"

using namespace flowcryst;

namespace {

LengthPrior prior() {
  LengthPrior p;
  p.loc.setConstant(std::log(5.0));
  p.scale.setConstant(0.2);
  return p;
}

FlowState state(int n, Rng& rng) { return base_state(std::vector<int>(static_cast<std::size_t>(n), 7), n, Mode::CSP, prior(), rng); }

void BM_TorusLog(benchmark::State& st) {
  Rng rng(1);
  const int n = static_cast<int>(st.range(0));
  const FlowState a = state(n, rng), b = state(n, rng);
  for (auto _ : st) benchmark::DoNotOptimize(torus_log(a.frac, b.frac));
  st.SetItemsProcessed(st.iterations() * n);
}
BENCHMARK(BM_TorusLog)->Arg(8)->Arg(64);

void BM_Forward(benchmark::State& st) {
  Rng rng(2);
  const int n = static_cast<int>(st.range(0));
  NetConfig cfg;
  const ModelParams p = ModelParams::initialize(cfg, rng);
  const FlowState s = state(n, rng);
  for (auto _ : st) benchmark::DoNotOptimize(forward(p, s, 0.4));
}
BENCHMARK(BM_Forward)->Arg(4)->Arg(8)->Arg(20);

void BM_Gradient(benchmark::State& st) {
  Rng rng(3);
  NetConfig cfg;
  const ModelParams p = ModelParams::initialize(cfg, rng);
  std::vector<TrainItem> batch;
  for (int b = 0; b < 16; ++b) {
    const FlowState c0 = state(8, rng), c1 = state(8, rng);
    TrainItem item;
    item.path = sample_conditional_path(c0, c1, sample_time(rng));
    batch.push_back(std::move(item));
  }
  const LossWeights w = LossWeights{0, 300, 1, 0}.normalized(Mode::CSP);
  Eigen::VectorXd grad;
  for (auto _ : st) benchmark::DoNotOptimize(loss_and_gradient(p, batch, w, grad));
}
BENCHMARK(BM_Gradient);

void BM_Matcher(benchmark::State& st) {
  Rng rng(4);
  const std::vector<Crystal> xs = perovskite_family(2, rng);
  for (auto _ : st) benchmark::DoNotOptimize(match_structures(xs[0], xs[1]));
}
BENCHMARK(BM_Matcher);

}  // namespace

BENCHMARK_MAIN();
