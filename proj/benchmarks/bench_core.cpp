#include <benchmark/benchmark.h>

#include "deepccg/ccg.hpp"
#include "deepccg/memory.hpp"
#include "deepccg/mlp.hpp"
#include "deepccg/rng.hpp"
#include "deepccg/stream.hpp"
#include "deepccg/trainer.hpp"

namespace {

using namespace deepccg;

std::vector<Vec> random_batch(std::size_t count, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec> xs(count, Vec(dim));
    for (auto& x : xs)
        for (auto& v : x) v = normal01(rng);
    return xs;
}

void BM_ForwardBackward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const MlpParams params = init_mlp({8, 64, 64, 16}, 7);
    const auto xs = random_batch(batch, 8, 11);
    const auto gs = random_batch(batch, 16, 13);
    for (auto _ : state) {
        auto [zs, cache] = forward(params, xs);
        benchmark::DoNotOptimize(backward(params, cache, gs));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(10)->Arg(100);

void BM_LogPredictive(benchmark::State& state) {
    Rng rng(17);
    std::vector<std::pair<Vec, int>> conditioning;
    for (int c = 0; c < 10; ++c)
        for (int i = 0; i < 10; ++i) {
            Vec z(16);
            for (auto& v : z) v = normal01(rng) + c;
            conditioning.emplace_back(std::move(z), c);
        }
    const PosteriorSet post = fit_posteriors(conditioning, 1e6);
    std::vector<int> allowed(10);
    for (int c = 0; c < 10; ++c) allowed[static_cast<std::size_t>(c)] = c;
    Vec z(16, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(log_predictive(post, z, allowed));
}
BENCHMARK(BM_LogPredictive);

void BM_SubsetSelection(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto zs = random_batch(n, 16, 23);
    const SelectionConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(select_subset_indices(zs, 10, cfg));
}
BENCHMARK(BM_SubsetSelection)->Arg(20)->Arg(40);

void BM_DeepccgStep(benchmark::State& state) {
    const SynthSpec spec{8, 10, 40, 6.0, 0.1};
    const auto data = synth_gaussian_dataset(spec, 3);
    const TaskSequence seq = build_disjoint_tasks(data, 5, 0.2, 3);
    TrainerConfig cfg;
    for (auto _ : state) {
        state.PauseTiming();
        Learner learner(Method::deepccg, init_mlp({8, 64, 64, 16}, 5), cfg, 10, 9);
        BatchStream stream(seq, 29);
        state.ResumeTiming();
        while (auto item = stream.next()) {
            const auto& [batch, task_id] = *item;
            learner.step(batch, seq.tasks[static_cast<std::size_t>(task_id)].classes);
        }
    }
}
BENCHMARK(BM_DeepccgStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
