#include <benchmark/benchmark.h>

#include "tsa/loss.hpp"
#include "tsa/network.hpp"
#include "tsa/oracle.hpp"
#include "tsa/runner.hpp"
#include "tsa/stats.hpp"

using namespace tsa;

namespace {

Matrix random_inputs(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = n(rng);
    return m;
}

// Width of the feature layer is range(0); batch size is range(1).
void BM_ForwardBackward(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    const auto batch = static_cast<std::size_t>(state.range(1));
    Rng rng(1);
    const std::vector<std::size_t> widths{width, width};
    const auto model = init_model(2, widths, 2, rng);
    const auto x = random_inputs(batch, 2, rng);
    for (auto _ : state) {
        const auto rec = forward(model, x);
        Matrix g(rec.logits.rows(), rec.logits.cols(), 1.0 / static_cast<double>(batch));
        benchmark::DoNotOptimize(backward(model, rec, g, Matrix(rec.features.rows(), rec.features.cols())));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Args({32, 32})->Args({128, 32})->Args({32, 256});

void BM_TransferableLoss(benchmark::State& state) {
    Rng rng(2);
    const auto inst = random_instance(rng, 5, static_cast<std::size_t>(state.range(0)), 32, 0.5);
    Matrix logits = matmul_transposed(inst.features, inst.head_w);
    for (auto _ : state)
        benchmark::DoNotOptimize(transferable_loss(logits, inst.labels, inst.head_w, inst.stats, inst.lambda));
}
BENCHMARK(BM_TransferableLoss)->Arg(8)->Arg(32)->Arg(128);

void BM_EstimateClassStats(benchmark::State& state) {
    const auto task = make_two_moons_task(0);
    Rng rng(3);
    const std::vector<std::size_t> widths{32, static_cast<std::size_t>(state.range(0))};
    const auto model = init_model(2, widths, 2, rng);
    const auto mem = memory_init(task.source, task.target, model);
    for (auto _ : state) benchmark::DoNotOptimize(estimate_class_stats(mem, 2));
}
BENCHMARK(BM_EstimateClassStats)->Arg(8)->Arg(32)->Arg(128);

void BM_TrainStep(benchmark::State& state) {
    const auto task = make_two_moons_task(0);
    TrainConfig c;
    c.total_iters = 1000000;
    c.estimator = state.range(0) == 0 ? Estimator::memory : Estimator::iterative;
    Trainer trainer(task.source, task.target, c);
    for (auto _ : state) trainer.step();
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
