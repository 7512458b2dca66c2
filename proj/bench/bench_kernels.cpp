// Gradient kernel and ranking throughput, serial against OpenMP.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "protorec/eval.hpp"
#include "protorec/synthetic.hpp"
#include "protorec/train.hpp"

using namespace protorec;

namespace {

struct Problem {
  ModelParams params;
  TrainConfig config;
  std::vector<TrainingExample> batch;
};

Problem make_problem(int k) {
  Problem p;
  p.config.filter = {k, k};
  p.config.lambda_u = p.config.lambda_t = 0.1;
  p.params = init_params(p.config.shape(2000, 1500), 1);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint32_t> user(0, 1999), item(0, 1499);
  for (std::size_t e = 0; e < p.config.batch_size; ++e) {
    TrainingExample ex{user(rng), item(rng), {}};
    for (std::size_t n = 0; n < p.config.n_negatives; ++n) ex.negatives.push_back(item(rng));
    p.batch.push_back(std::move(ex));
  }
  return p;
}

void BM_GradientReference(benchmark::State& state) {
  const auto p = make_problem(static_cast<int>(state.range(0)));
  Gradients g(p.params);
  for (auto _ : state) {
    g.clear();
    benchmark::DoNotOptimize(reference::batch_gradients(p.batch, p.params, p.config, g));
  }
  state.SetItemsProcessed(state.iterations() * p.batch.size());
}

void BM_GradientKernel(benchmark::State& state) {
  const auto p = make_problem(static_cast<int>(state.range(0)));
  Gradients g(p.params);
  for (auto _ : state) {
    g.clear();
    benchmark::DoNotOptimize(batch_gradients(p.batch, p.params, p.config, g));
  }
  state.SetItemsProcessed(state.iterations() * p.batch.size());
}

void BM_RankAll(benchmark::State& state) {
  SyntheticSpec spec;
  const auto ds = synthetic_dataset(make_synthetic(spec));
  const auto split = make_split(ds, 1);
  TrainConfig cfg;
  const auto params = init_params(cfg.shape(ds.n_users, ds.n_items), 3);
  const auto exec = state.range(0) ? Exec::parallel : Exec::serial;
  for (auto _ : state) benchmark::DoNotOptimize(rank_all(params, cfg.filter, split, Stage::test, exec));
  state.SetItemsProcessed(state.iterations() * split.test.size());
}

}  // namespace

BENCHMARK(BM_GradientReference)->Arg(kAllPrototypes)->Arg(4);
BENCHMARK(BM_GradientKernel)->Arg(kAllPrototypes)->Arg(4);
BENCHMARK(BM_RankAll)->Arg(0)->Arg(1);

BENCHMARK_MAIN();
