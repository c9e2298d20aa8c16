#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "slide/hash_family.hpp"
#include "slide/sparse_vector.hpp"

namespace {

using namespace slide;

SparseVector random_sparse(std::uint32_t dim, std::uint32_t nnz, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<std::uint32_t> col(0, dim - 1);
    std::normal_distribution<Real> value;
    std::vector<std::pair<std::uint32_t, Real>> entries;
    while (entries.size() < nnz) entries.emplace_back(col(rng), value(rng));
    std::sort(entries.begin(), entries.end());
    entries.erase(std::unique(entries.begin(), entries.end(),
                              [](const auto& a, const auto& b) { return a.first == b.first; }),
                  entries.end());
    return SparseVector::from_pairs(dim, entries);
}

// Args: family, input dim, nonzeros.
void BM_HashSparse(benchmark::State& state) {
    HashFamilyConfig c;
    c.family = static_cast<HashFamilyKind>(state.range(0));
    c.dim = static_cast<std::uint32_t>(state.range(1));
    c.k_per_table = 6;
    c.num_tables = 50;
    const auto family = make_hash_family(c);
    const auto x = random_sparse(c.dim, static_cast<std::uint32_t>(state.range(2)), 1);
    std::vector<HashKey> out(c.num_tables);
    for (auto _ : state) {
        family->hash_into(x, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetLabel(std::string(to_string(c.family)));
}
BENCHMARK(BM_HashSparse)
    ->ArgsProduct({{0, 1, 2, 3}, {128}, {128}})
    ->ArgsProduct({{0, 2, 3}, {100'000}, {75}});

void BM_HashDenseRow(benchmark::State& state) {
    HashFamilyConfig c;
    c.dim = static_cast<std::uint32_t>(state.range(0));
    c.k_per_table = 6;
    c.num_tables = 50;
    const auto family = make_hash_family(c);
    Rng rng(2);
    std::normal_distribution<Real> g;
    std::vector<Real> row(c.dim);
    for (auto& w : row) w = g(rng);
    std::vector<HashKey> out(c.num_tables);
    for (auto _ : state) {
        family->hash_into(std::span<const Real>(row), out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_HashDenseRow)->Arg(128)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
