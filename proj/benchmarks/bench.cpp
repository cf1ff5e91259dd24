// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "crome/adapter.hpp"
#include "crome/pipeline.hpp"

using namespace crome;

static void BM_Matmul(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(1);
    Tensor a = Tensor::randn({n, n}, rng, 1.0);
    Tensor b = Tensor::randn({n, n}, rng, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_AdapterForward(benchmark::State& state) {
    ParamRegistry reg;
    AdapterConfig cfg;
    cfg.d = 64;
    cfg.m = static_cast<int>(state.range(0));
    Rng rng(2);
    Adapter adapter(cfg, reg, rng);
    for (Scalar& v : reg.get("adapter.shared.up").values()) v = 0.02 * rng.normal();
    Tensor x = Tensor::randn({16, 64}, rng, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(adapter.forward(x, Branch::Image));
}
BENCHMARK(BM_AdapterForward)->Arg(4)->Arg(16)->Arg(64);

static void BM_AdapterBackward(benchmark::State& state) {
    ParamRegistry reg;
    AdapterConfig cfg;
    cfg.d = 64;
    cfg.m = 16;
    Rng rng(3);
    Adapter adapter(cfg, reg, rng);
    for (Scalar& v : reg.get("adapter.shared.up").values()) v = 0.02 * rng.normal();
    reg.apply_freeze({"adapter."});
    Tensor x = Tensor::randn({16, 64}, rng, 1.0);
    for (auto _ : state) {
        reg.zero_grads();
        backward(sum(adapter.forward(x, Branch::Image)));
    }
}
BENCHMARK(BM_AdapterBackward);

static void BM_TrainStep(benchmark::State& state) {
    Vocab vocab;
    GeneratedDataset cap = generate_dataset(TaskKind::Caption, 16, 9, vocab);
    CromeModel model(default_model_config(vocab.size()), 42);

    StageConfig stage = toy_stage_config(StageKind::Instruct);
    stage.batch_size = static_cast<int>(state.range(0));
    stage.max_steps = 1;
    stage.lr.max_steps = 1;
    stage.lr.warmup_steps = 1;
    for (auto _ : state) benchmark::DoNotOptimize(train_stage(model, stage, {cap.dataset}));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
