#include <benchmark/benchmark.h>

#include "spav/nn.hpp"

using namespace spav;

namespace {

// Forward + backward of an offset-net-shaped MLP over a training batch.
void BM_MlpTrainStep(benchmark::State& state) {
    Rng rng(1);
    MlpSpec spec;
    spec.in_dim = 43;
    spec.out_dim = 6;
    spec.depth = 8;
    spec.width = static_cast<int>(state.range(0));
    spec.skip_layers = {4};
    Mlp mlp = Mlp::init(spec, rng);

    Tensor input({4096, 43});
    for (auto& v : input.values) v = rng.uniform(-1, 1);

    for (auto _ : state) {
        Tape tape;
        const auto out = mlp.forward(tape, tape.leaf(input));
        const auto loss = tape.mean_all(tape.square(out));
        mlp.zero_grad();
        tape.backward_scalar(loss);
        benchmark::DoNotOptimize(tape.value(loss).values[0]);
    }
    state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_MlpTrainStep)->Arg(64)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_MlpInference(benchmark::State& state) {
    Rng rng(2);
    MlpSpec spec;
    spec.in_dim = 27;
    spec.out_dim = 17;
    spec.depth = 5;
    spec.width = static_cast<int>(state.range(0));
    const Mlp mlp = Mlp::init(spec, rng);
    Tensor input({4096, 27});
    for (auto& v : input.values) v = rng.uniform(-1, 1);
    for (auto _ : state) {
        const Tensor out = mlp.forward_plain(input);
        benchmark::DoNotOptimize(out.values[0]);
    }
    state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_MlpInference)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
