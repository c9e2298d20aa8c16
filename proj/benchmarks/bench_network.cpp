#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "slide/network.hpp"

namespace {

using namespace slide;

NetworkConfig config(NeuronSelection output) {
    NetworkConfig c;
    c.input_dim = 10'000;
    c.batch_slots = 1;
    LayerConfig hidden;
    hidden.width = 128;
    LayerConfig out;
    out.width = 20'000;
    out.activation = Activation::Softmax;
    out.selection = output;
    out.lsh.hash.k_per_table = 6;
    out.lsh.hash.num_tables = 50;
    out.lsh.sampler.beta = 400;
    c.layers = {hidden, out};
    return c;
}

// One forward and backward pass on a 75-nonzero input.
void BM_Step(benchmark::State& state, NeuronSelection output) {
    Network net(config(output));
    Rng rng(1);
    std::uniform_int_distribution<std::uint32_t> col(0, 9'999);
    std::vector<std::pair<std::uint32_t, Real>> entries;
    for (int i = 0; i < 75; ++i) entries.emplace_back(col(rng), 1.0);
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
    const auto x = SparseVector::from_pairs(10'000, entries);
    const NeuronId label = 123;
    for (auto _ : state) {
        net.forward(x, 0, std::span(&label, 1));
        net.backward(0, std::span(&label, 1));
        net.reset_batch();
    }
}
BENCHMARK_CAPTURE(BM_Step, lsh, NeuronSelection::Lsh)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Step, dense, NeuronSelection::Dense)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
