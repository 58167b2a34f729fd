#include <benchmark/benchmark.h>

#include <numeric>

#include "easycore/analysis.hpp"
#include "easycore/attack.hpp"
#include "easycore/autodiff.hpp"
#include "easycore/coreset.hpp"
#include "easycore/data.hpp"
#include "easycore/model.hpp"
#include "easycore/parallel.hpp"
#include "easycore/rng.hpp"
#include "easycore/train.hpp"

namespace {

using namespace easycore;

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.normal();
  return Tensor::from({rows, cols}, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_batch(n, n, 1), b = random_batch(n, n, 2);
  for (auto _ : state) {
    Tensor c = op_forward(OpKind::matmul, std::array{a, b});
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
  const Model model = build_model(ModelConfig{2, 256, 20, 2}, 0);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_batch(batch, 2, 3);
  std::vector<int> y(batch);
  for (std::size_t i = 0; i < batch; ++i) y[i] = static_cast<int>(i % 2);
  Model m = model.clone();
  Tape tape;
  for (auto _ : state) {
    tape.reset();
    m.zero_grad();
    tape.backward(tape.softmax_cross_entropy(m.forward(tape, x, ParamMode::trainable), y));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_AignPass(benchmark::State& state) {
  const Model model = build_model(ModelConfig{2, 256, 20, 2}, 0);
  const auto split = generate_clusters(ClusterConfig::six_clusters(), 0);
  for (auto _ : state) benchmark::DoNotOptimize(input_gradient_norms(model, split.train).data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(split.train.size()));
}
BENCHMARK(BM_AignPass)->Unit(benchmark::kMillisecond);

void BM_Pgd20(benchmark::State& state) {
  const Model model = build_model(ModelConfig{2, 256, 20, 2}, 0);
  const auto split = generate_clusters(ClusterConfig::six_clusters(), 0);
  AttackConfig cfg;
  cfg.epsilon = 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(adversarial_accuracy(model, split.test, cfg).overall);
}
BENCHMARK(BM_Pgd20)->Unit(benchmark::kMillisecond);

void BM_EasycoreSelect(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  CounterRng rng(4);
  std::vector<double> scores(n);
  for (double& s : scores) s = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(easycore_select(scores, 0.6).data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_EasycoreSelect)->Arg(1200)->Arg(50000);

void BM_PcaKappa(benchmark::State& state) {
  const Tensor features = random_batch(1200, 256, 5);
  for (auto _ : state) benchmark::DoNotOptimize(pca_kappa(features, 0.95));
}
BENCHMARK(BM_PcaKappa)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  easycore::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
