#include <benchmark/benchmark.h>

#include "causalpose/gradcheck.hpp"
#include "causalpose/scm.hpp"
#include "causalpose/trainer.hpp"

namespace {

using namespace causalpose;

Dataset bench_dataset(int n) {
  BenchConfig cfg;
  cfg.n_samples = n;
  cfg.seed = 99;
  return generate_dataset(cfg);
}

void BM_TrainStep(benchmark::State& state) {
  Dataset ds = bench_dataset(64);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = static_cast<int>(state.range(0));
  cfg.seed = 3;
  ModelDims dims{ds.d_in, ds.k(), 32, 64, 32};
  Trainer trainer(PoseModel::init(dims, ds.skeleton, InterventionStrategy::top_n(2), 3), cfg);
  trainer.set_total_iters(1 << 20);
  std::vector<int> idx;
  for (int i = 0; i < cfg.batch_size; ++i) idx.push_back(i % ds.size());
  Batch batch = make_batch(ds, idx);
  for (auto _ : state) {
    StepResult r = trainer.train_step(batch);
    benchmark::DoNotOptimize(r.loss_total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32);

void BM_EvalForward(benchmark::State& state) {
  Dataset ds = bench_dataset(static_cast<int>(state.range(0)));
  ModelDims dims{ds.d_in, ds.k(), 32, 64, 32};
  PoseModel model = PoseModel::init(dims, ds.skeleton, InterventionStrategy::top_n(2), 5);
  std::vector<int> idx;
  for (int i = 0; i < ds.size(); ++i) idx.push_back(i);
  Batch batch = make_batch(ds, idx);
  for (auto _ : state) {
    auto out = model.run_eval(batch.x);
    benchmark::DoNotOptimize(out.px.data.data());
  }
}
BENCHMARK(BM_EvalForward)->Arg(64)->Arg(256);

void BM_ScmEnumeration(benchmark::State& state) {
  Rng rng(42);
  DiscreteScm scm = DiscreteScm::random(rng, 5, 5);
  for (auto _ : state) {
    DoCalcReport rep = verify_docalc(scm);
    benchmark::DoNotOptimize(rep.max_dev_adjustment);
  }
}
BENCHMARK(BM_ScmEnumeration);

void BM_DatasetGeneration(benchmark::State& state) {
  BenchConfig cfg;
  cfg.n_samples = static_cast<int>(state.range(0));
  cfg.seed = 7;
  for (auto _ : state) {
    Dataset ds = generate_dataset(cfg);
    benchmark::DoNotOptimize(ds.samples.data());
  }
}
BENCHMARK(BM_DatasetGeneration)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
