#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "emc/ensemble.hpp"

namespace {

emc::Hyperparams hyperparams(std::size_t n, std::size_t k, std::size_t d) {
  emc::Hyperparams hp;
  hp.ensemble_size = n;
  hp.k = k;
  hp.dim = d;
  hp.classes = 10;
  hp.seed = 1;
  return hp;
}

std::vector<double> input(std::size_t d, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> z(d);
  for (double& v : z) v = normal(rng);
  return z;
}

void BM_TopKSelect(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  const emc::EnsembleMemory mem = emc::EnsembleMemory::initialize(hyperparams(n, 32, d));
  const std::vector<double> z = input(d, 2);
  for (auto _ : state) benchmark::DoNotOptimize(emc::top_k_select(mem, z, 32));
}
BENCHMARK(BM_TopKSelect)->Args({1024, 64})->Args({1024, 512})->Args({4096, 64});

void BM_EnsembleForward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const emc::Hyperparams hp = hyperparams(1024, k, 64);
  const emc::EnsembleMemory mem = emc::EnsembleMemory::initialize(hp);
  const std::vector<double> z = input(64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(emc::ensemble_forward(mem, z, hp));
}
BENCHMARK(BM_EnsembleForward)->Arg(1)->Arg(32)->Arg(512);

void BM_TrainStep(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const emc::Hyperparams hp = hyperparams(1024, k, 64);
  emc::EnsembleMemory mem = emc::EnsembleMemory::initialize(hp);
  std::vector<std::vector<double>> zs;
  std::vector<emc::Example> batch;
  for (unsigned i = 0; i < 60; ++i) zs.push_back(input(64, 10 + i));
  for (std::size_t i = 0; i < 60; ++i) batch.push_back({zs[i], i % 10});
  emc::Gradients scratch(1024, 10, 64);
  for (auto _ : state) emc::train_step(mem, batch, hp, scratch);
  state.SetItemsProcessed(state.iterations() * 60);
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
