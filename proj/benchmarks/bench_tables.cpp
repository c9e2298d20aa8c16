#include <numeric>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "slide/lsh_tables.hpp"
#include "slide/sampler.hpp"

namespace {

using namespace slide;

// Arg: number of candidate ids spread over 50 tables.
void BM_Sampler(benchmark::State& state, SamplingStrategy strategy) {
    const auto n = static_cast<std::uint32_t>(state.range(0));
    const std::uint32_t l = 50;
    Rng rng(1);
    std::uniform_int_distribution<NeuronId> id(0, n - 1);
    std::vector<std::vector<NeuronId>> buckets(l, std::vector<NeuronId>(n / l));
    for (auto& b : buckets) {
        for (auto& x : b) x = id(rng);
    }
    RawCandidates raw(buckets.begin(), buckets.end());
    SamplerConfig cfg;
    cfg.strategy = strategy;
    cfg.beta = n / 2;
    cfg.min_freq = 2;
    SamplerScratch scratch(n);
    SampleReport report;
    for (auto _ : state) {
        sample(raw, cfg, rng, scratch, report);
        benchmark::DoNotOptimize(report.active_ids.data());
    }
}
BENCHMARK_CAPTURE(BM_Sampler, vanilla, SamplingStrategy::Vanilla)->Range(1'000, 100'000);
BENCHMARK_CAPTURE(BM_Sampler, threshold, SamplingStrategy::HardThreshold)->Range(1'000, 100'000);
BENCHMARK_CAPTURE(BM_Sampler, topk, SamplingStrategy::TopK)->Range(1'000, 100'000);

struct TableFixture {
    TableFixture(std::uint32_t neurons, std::uint32_t dim, std::uint32_t k, BucketPolicy policy)
        : weights(std::size_t{neurons} * dim), rows{weights, neurons, dim} {
        Rng rng(3);
        std::normal_distribution<Real> g;
        for (auto& w : weights) w = g(rng);
        HashFamilyConfig hc;
        hc.dim = dim;
        hc.k_per_table = k;
        hc.num_tables = 50;
        TableConfig tc;
        tc.bucket_capacity = 16;
        tc.policy = policy;
        tables = std::make_unique<LshTables>(hc, tc);
        tables->build(rows);
        for (NeuronId a = 0; a < neurons; ++a) {
            const auto c = tables->codes_of(a);
            codes.insert(codes.end(), c.begin(), c.end());
        }
    }

    std::vector<Real> weights;
    WeightRows rows;
    std::unique_ptr<LshTables> tables;
    std::vector<HashKey> codes;
};

// Insertion from precomputed codes under heavy collisions (K = 1).
void BM_Insert(benchmark::State& state, BucketPolicy policy) {
    const auto neurons = static_cast<std::uint32_t>(state.range(0));
    TableFixture f(neurons, 64, 1, policy);
    for (auto _ : state) {
        f.tables->clear();
        for (NeuronId a = 0; a < neurons; ++a) f.tables->insert(a, std::span(f.codes).subspan(std::size_t{a} * 50, 50));
    }
    state.SetItemsProcessed(state.iterations() * neurons * 50);
}
BENCHMARK_CAPTURE(BM_Insert, fifo, BucketPolicy::Fifo)->Arg(20'000);
BENCHMARK_CAPTURE(BM_Insert, reservoir, BucketPolicy::Reservoir)->Arg(20'000);

void BM_FullBuild(benchmark::State& state) {
    TableFixture f(static_cast<std::uint32_t>(state.range(0)), 128, 6, BucketPolicy::Fifo);
    for (auto _ : state) f.tables->build(f.rows);
}
BENCHMARK(BM_FullBuild)->Arg(2'000)->Arg(20'000);

void BM_Query(benchmark::State& state) {
    TableFixture f(20'000, 128, 6, BucketPolicy::Fifo);
    Rng rng(4);
    std::normal_distribution<Real> g;
    std::vector<std::pair<std::uint32_t, Real>> entries;
    for (std::uint32_t i = 0; i < 128; ++i) entries.emplace_back(i, std::max<Real>(0, g(rng)));
    const auto x = SparseVector::from_pairs(128, entries);
    RawCandidates raw;
    for (auto _ : state) {
        f.tables->query(x, raw);
        benchmark::DoNotOptimize(raw.data());
    }
}
BENCHMARK(BM_Query);

}  // namespace

BENCHMARK_MAIN();
