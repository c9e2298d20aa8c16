#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "oracle.hpp"
#include "slide/lsh_tables.hpp"

using namespace slide;

namespace {

std::vector<Real> random_unit(std::uint32_t d, Rng& rng) {
    std::normal_distribution<Real> g;
    std::vector<Real> v(d);
    for (auto& x : v) x = g(rng);
    const Real n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), Real{0}));
    for (auto& x : v) x /= n;
    return v;
}

oracle::DenseNet toy_net(std::uint32_t in, std::vector<std::uint32_t> widths, Rng& rng) {
    oracle::DenseNet net;
    net.input_dim = in;
    net.widths = std::move(widths);
    std::uniform_real_distribution<Real> u(-0.8, 0.8);
    for (std::size_t l = 0; l < net.widths.size(); ++l) {
        net.weights.emplace_back(std::size_t{net.widths[l]} * net.in_dim(l));
        net.biases.emplace_back(net.widths[l]);
        for (auto& w : net.weights.back()) w = u(rng);
        for (auto& b : net.biases.back()) b = u(rng);
    }
    return net;
}

}  // namespace

TEST(ExactMips, QueryRanksItselfFirstAmongUnitRows) {
    Rng rng(1);
    const std::uint32_t d = 20, n = 200;
    std::vector<Real> rows;
    for (std::uint32_t r = 0; r < n; ++r) {
        const auto v = random_unit(d, rng);
        rows.insert(rows.end(), v.begin(), v.end());
    }
    for (NeuronId q : {0u, 57u, 199u}) {
        const std::span<const Real> query(rows.data() + std::size_t{q} * d, d);
        EXPECT_EQ(oracle::exact_mips(query, rows, n, 1)[0], q);
    }
}

TEST(ExactMips, FullOrderingAndTies) {
    const std::vector<Real> rows{1, 0, 2, 0, 1, 0, -1, 0};
    const std::vector<Real> q{1, 0};
    EXPECT_EQ(oracle::exact_mips(q, rows, 4, 4), (std::vector<NeuronId>{1, 0, 2, 3}));
    const auto sparse = SparseVector::from_pairs(2, {{0, 1.0}});
    EXPECT_EQ(oracle::exact_mips(sparse, rows, 4, 2), (std::vector<NeuronId>{1, 0}));
    EXPECT_THROW(oracle::exact_mips(q, rows, 4, 5), std::invalid_argument);
}

TEST(ExactMips, SimHashTablesRecallPlantedNeighbours) {
    Rng rng(2);
    const std::uint32_t d = 64, n = 10'000, planted = 50;
    const auto query = random_unit(d, rng);
    std::vector<Real> rows;
    rows.reserve(std::size_t{n} * d);
    std::normal_distribution<Real> g(0.0, 0.35 / std::sqrt(Real(d)));
    for (std::uint32_t r = 0; r < n; ++r) {
        std::vector<Real> v;
        if (r % (n / planted) == 0) {
            v = query;
            for (auto& x : v) x += g(rng);
            const Real norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), Real{0}));
            for (auto& x : v) x /= norm;
        } else {
            v = random_unit(d, rng);
        }
        rows.insert(rows.end(), v.begin(), v.end());
    }
    HashFamilyConfig hc;
    hc.k_per_table = 6;
    hc.num_tables = 25;
    hc.dim = d;
    hc.seed = 3;
    TableConfig tc;
    tc.bucket_capacity = 1024;
    LshTables tables(hc, tc);
    tables.build({rows, n, d});

    const auto q = SparseVector::from_dense(query);
    std::set<NeuronId> retrieved;
    for (const auto& bucket : tables.query(q)) retrieved.insert(bucket.begin(), bucket.end());
    const auto top = oracle::exact_mips(query, rows, n, planted);
    const auto hits = std::count_if(top.begin(), top.end(), [&](NeuronId a) { return retrieved.count(a) > 0; });
    EXPECT_GE(hits, 30) << "recall " << hits << "/" << planted;
    EXPECT_LT(retrieved.size(), n / 2);
}

TEST(MonteCarloCollision, KnownRates) {
    HashFamilyConfig hc;
    hc.dim = 300;
    Rng rng(4);
    const auto a = random_unit(300, rng);
    EXPECT_DOUBLE_EQ(oracle::mc_collision(hc, a, a, 2000, 1), 1.0);
    std::vector<Real> neg(a);
    for (auto& x : neg) x = -x;
    EXPECT_NEAR(oracle::mc_collision(hc, a, neg, 2000, 1), 0.0, 1e-12);
    // Orthogonal pair, then a pair at 60 degrees.
    std::vector<Real> e0(300, 0.0), e1(300, 0.0), e60(300, 0.0);
    for (std::uint32_t i = 0; i < 150; ++i) e0[i] = 1.0;
    for (std::uint32_t i = 150; i < 300; ++i) e1[i] = 1.0;
    for (std::uint32_t i = 75; i < 225; ++i) e60[i] = 1.0;
    hc.k_per_table = 1;
    EXPECT_NEAR(oracle::mc_collision(hc, e0, e1, 20'000, 2), 0.5, 0.02);
    EXPECT_NEAR(oracle::mc_collision(hc, e0, e60, 20'000, 3), 2.0 / 3.0, 0.02);
    EXPECT_THROW(oracle::mc_collision(hc, e0, e1, 999, 1), std::invalid_argument);
}

TEST(DenseOracle, SizeGuard) {
    Rng rng(5);
    const auto net = toy_net(100, {101, 2}, rng);
    const std::vector<Real> x(100, 0.1);
    EXPECT_THROW(oracle::dense_forward_backward(net, x, {}), std::length_error);
}

TEST(DenseOracle, SoftmaxSumsToOne) {
    Rng rng(6);
    const auto net = toy_net(6, {5, 9}, rng);
    const std::vector<Real> x{1, 0, -2, 0.5, 0, 3};
    const auto r = oracle::dense_forward_backward(net, x, {});
    const auto& p = r.activations.back();
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), Real{0}), 1.0, 1e-12);
}

TEST(DenseOracle, GradientsMatchFiniteDifferences) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto net = toy_net(5, {6, 4}, rng);
        std::vector<Real> x(5);
        std::uniform_real_distribution<Real> u(-1, 1);
        for (auto& v : x) v = u(rng);
        const std::vector<NeuronId> labels{static_cast<NeuronId>(trial % 4)};
        const auto r = oracle::dense_forward_backward(net, x, labels);
        const Real h = 1e-6;
        for (std::size_t l = 0; l < net.widths.size(); ++l) {
            for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
                const Real saved = net.weights[l][i];
                net.weights[l][i] = saved + h;
                const Real up = oracle::dense_forward_backward(net, x, labels).loss;
                net.weights[l][i] = saved - h;
                const Real down = oracle::dense_forward_backward(net, x, labels).loss;
                net.weights[l][i] = saved;
                EXPECT_NEAR((up - down) / (2 * h), r.grad_w[l][i], 1e-5);
            }
        }
    }
}
