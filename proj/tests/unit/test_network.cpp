#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "oracle.hpp"
#include "slide/dataset.hpp"
#include "slide/network.hpp"

using namespace slide;

namespace {

LayerConfig dense_layer(std::uint32_t width, Activation act) {
    LayerConfig l;
    l.width = width;
    l.activation = act;
    return l;
}

LayerConfig lsh_layer(std::uint32_t width, std::uint32_t k, std::uint32_t l, std::uint32_t beta) {
    LayerConfig c = dense_layer(width, Activation::Softmax);
    c.selection = NeuronSelection::Lsh;
    c.lsh.hash.k_per_table = k;
    c.lsh.hash.num_tables = l;
    c.lsh.sampler.beta = beta;
    c.lsh.tables.bucket_capacity = 32;
    return c;
}

NetworkConfig net_config(std::uint32_t input_dim, std::vector<LayerConfig> layers, std::uint32_t slots = 4,
                         std::uint64_t seed = 1) {
    NetworkConfig c;
    c.input_dim = input_dim;
    c.layers = std::move(layers);
    c.batch_slots = slots;
    c.seed = seed;
    return c;
}

NetworkConfig dense_mlp(std::uint32_t in, std::uint32_t hidden, std::uint32_t out, std::uint32_t slots = 4,
                        std::uint64_t seed = 1) {
    return net_config(in, {dense_layer(hidden, Activation::ReLU), dense_layer(out, Activation::Softmax)}, slots, seed);
}

SparseVector random_input(std::uint32_t d, Rng& rng, double density = 0.5) {
    std::bernoulli_distribution keep(density);
    std::uniform_real_distribution<Real> value(0.1, 1.0);
    std::vector<std::pair<std::uint32_t, Real>> entries;
    for (std::uint32_t i = 0; i < d; ++i) {
        if (keep(rng)) entries.emplace_back(i, value(rng));
    }
    if (entries.empty()) entries.emplace_back(0, 0.5);
    return SparseVector::from_pairs(d, std::move(entries));
}

std::vector<std::vector<Real>> all_weights(const Network& net) {
    std::vector<std::vector<Real>> out;
    for (std::uint32_t l = 0; l < net.num_layers(); ++l) {
        out.emplace_back(net.layer(l).weights().begin(), net.layer(l).weights().end());
        out.emplace_back(net.layer(l).bias().begin(), net.layer(l).bias().end());
    }
    return out;
}

ForwardOptions forced(std::vector<std::optional<std::vector<NeuronId>>> sets) {
    ForwardOptions o;
    o.forced_active = std::move(sets);
    return o;
}

TrainConfig train_config(int workers = 1) {
    TrainConfig c;
    c.learning_rate = 1e-2;
    c.workers = workers;
    return c;
}

// Records every weight-row access and checks it against the live active sets.
class LocalityObserver : public AccessObserver {
public:
    explicit LocalityObserver(const Network& net) : net_(net) {}

    void on_row(std::uint32_t layer, NeuronId neuron, std::span<const std::uint32_t> inputs,
                AccessKind kind) override {
        if (kind == AccessKind::Update) {
            ++updates;
            updated_weights += inputs.size();
            // The row must have been active in some slot this batch.
            if (!allowed_update_[layer].count(neuron)) ++violations;
            return;
        }
        const auto& active = net_.trace(0).active[layer];
        if (!std::binary_search(active.begin(), active.end(), neuron)) ++violations;
        if (layer > 0) {
            const auto& prev = net_.trace(0).active[layer - 1];
            for (std::uint32_t i : inputs) {
                if (!std::binary_search(prev.begin(), prev.end(), i)) ++violations;
            }
        }
    }

    void allow_updates_from(const ForwardTrace& trace) {
        allowed_update_.resize(trace.active.size());
        for (std::size_t l = 0; l < trace.active.size(); ++l) {
            allowed_update_[l].insert(trace.active[l].begin(), trace.active[l].end());
        }
    }

    std::size_t violations = 0;
    std::size_t updates = 0;
    std::size_t updated_weights = 0;

private:
    const Network& net_;
    std::vector<std::set<NeuronId>> allowed_update_;
};

}  // namespace

// Construction -----------------------------------------------------------------

TEST(Network, RejectsBadConfigs) {
    EXPECT_THROW(Network(net_config(0, {dense_layer(3, Activation::Softmax)})), ConfigError);
    EXPECT_THROW(Network(net_config(4, {})), ConfigError);
    EXPECT_THROW(Network(net_config(4, {dense_layer(3, Activation::ReLU)})), ConfigError);
    EXPECT_THROW(Network(net_config(4, {dense_layer(3, Activation::Softmax), dense_layer(3, Activation::Softmax)})),
                 ConfigError);
    auto lsh = lsh_layer(10, 2, 2, 3);
    lsh.lsh.hash.dim = 5;
    EXPECT_THROW(Network(net_config(4, {lsh})), ConfigError);
    auto uniform = dense_layer(10, Activation::Softmax);
    uniform.selection = NeuronSelection::Uniform;
    uniform.uniform_count = 11;
    EXPECT_THROW(Network(net_config(4, {uniform})), ConfigError);
}

TEST(Network, WeightInitWithinFanInBound) {
    Network net(dense_mlp(25, 8, 3));
    for (Real w : net.layer(0).weights()) EXPECT_LE(std::abs(w), 1.0 / 5.0);
    for (Real b : net.layer(0).bias()) EXPECT_EQ(b, 0.0);
}

// Forward ------------------------------------------------------------------------

TEST(Forward, SingleActiveOutputHasProbabilityOne) {
    Network net(dense_mlp(6, 4, 5));
    Rng rng(1);
    const auto x = random_input(6, rng);
    const auto& t = net.forward(x, 0, {}, forced({std::nullopt, std::vector<NeuronId>{3}}));
    ASSERT_EQ(t.output.size(), 1u);
    EXPECT_DOUBLE_EQ(t.output[0], 1.0);
}

TEST(Forward, DenseNetworkMatchesOracleExactly) {
    Network net(dense_mlp(12, 7, 5));
    const auto ref = oracle::snapshot(net);
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_input(12, rng);
        const auto dense = x.to_dense();
        const auto expected = oracle::dense_forward_backward(ref, dense, {});
        const auto& t = net.forward(x, 0);
        ASSERT_EQ(t.output.size(), 5u);
        for (std::size_t a = 0; a < 5; ++a) EXPECT_EQ(t.output[a], expected.activations.back()[a]);
        for (NeuronId a = 0; a < 7; ++a) {
            EXPECT_EQ(net.layer(0).activation_value(a, 0), expected.activations[0][a]);
        }
    }
}

TEST(Forward, HandComputedToyNetwork) {
    // 2 inputs -> 3 ReLU -> 2 softmax, hidden active set forced to {0, 2}.
    Network net(dense_mlp(2, 3, 2));
    Layer& h = net.layer(0);
    const Real hw[] = {1.0, 2.0, -1.0, 1.0, 0.5, -0.5};
    std::copy(std::begin(hw), std::end(hw), h.weights().begin());
    h.bias()[0] = 0.1;
    h.bias()[1] = 5.0;
    h.bias()[2] = 0.0;
    Layer& o = net.layer(1);
    const Real ow[] = {1.0, 100.0, -1.0, 0.5, 100.0, 2.0};
    std::copy(std::begin(ow), std::end(ow), o.weights().begin());
    o.bias()[0] = 0.0;
    o.bias()[1] = 0.2;

    const auto x = SparseVector::from_pairs(2, {{0, 1.0}, {1, 3.0}});
    const auto& t = net.forward(x, 0, {}, forced({std::vector<NeuronId>{0, 2}, std::nullopt}));
    // h0 = relu(0.1 + 1*1 + 2*3) = 7.1, h2 = relu(0 + 0.5*1 - 0.5*3) = 0.
    EXPECT_DOUBLE_EQ(h.activation_value(0, 0), 7.1);
    EXPECT_DOUBLE_EQ(h.activation_value(2, 0), 0.0);
    EXPECT_FALSE(h.active(1, 0));
    // Only h0 feeds the output: z0 = 7.1, z1 = 0.2 + 0.5 * 7.1 = 3.75.
    const auto& next = net.layer_input(0, 1);
    EXPECT_EQ(next.indices(), (std::vector<std::uint32_t>{0}));
    const Real z0 = 7.1, z1 = 3.75;
    const Real s0 = 1.0 / (1.0 + std::exp(z1 - z0));
    EXPECT_NEAR(t.output[0], s0, 1e-15);
    EXPECT_NEAR(t.output[1], 1.0 - s0, 1e-15);
}

TEST(Forward, SoftmaxSumsToOneOverActiveSet) {
    Rng rng(3);
    Network net(net_config(30, {dense_layer(16, Activation::ReLU), lsh_layer(200, 3, 8, 20)}, 2, 3));
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_input(30, rng, 0.3);
        const NeuronId label = std::uniform_int_distribution<NeuronId>(0, 199)(rng);
        const auto& t = net.forward(x, trial % 2, std::span(&label, 1));
        const Real total = std::accumulate(t.output.begin(), t.output.end(), Real{0});
        EXPECT_NEAR(total, 1.0, 1e-6);
        EXPECT_TRUE(std::binary_search(t.active[1].begin(), t.active[1].end(), label));
    }
}

TEST(Forward, Errors) {
    Network net(dense_mlp(6, 4, 3, 2));
    const SparseVector wrong(7);
    EXPECT_THROW(net.forward(wrong, 0), DimensionMismatch);
    const SparseVector ok(6);
    EXPECT_THROW(net.forward(ok, 2), std::out_of_range);
    const NeuronId bad_label = 3;
    EXPECT_THROW(net.forward(ok, 0, std::span(&bad_label, 1)), std::out_of_range);
}

TEST(Forward, EmptyRetrievalFallsBackToUniformSample) {
    Network net(net_config(10, {lsh_layer(100, 4, 3, 12)}, 1));
    net.layer(0).tables()->clear();
    Rng rng(4);
    const auto x = random_input(10, rng);
    const auto& t = net.forward(x, 0);
    EXPECT_EQ(t.active[0].size(), 12u);
    const NeuronId label = 99;
    const auto& with_label = net.forward(x, 0, std::span(&label, 1));
    EXPECT_GE(with_label.active[0].size(), 12u);
    EXPECT_TRUE(std::binary_search(with_label.active[0].begin(), with_label.active[0].end(), label));
}

TEST(Forward, UniformSelectionDrawsFixedCount) {
    auto out = dense_layer(50, Activation::Softmax);
    out.selection = NeuronSelection::Uniform;
    out.uniform_count = 8;
    Network net(net_config(10, {out}, 1));
    Rng rng(5);
    const auto x = random_input(10, rng);
    const NeuronId labels[] = {3, 40};
    const auto& t = net.forward(x, 0, labels);
    EXPECT_GE(t.active[0].size(), 8u);
    EXPECT_LE(t.active[0].size(), 10u);
    EXPECT_EQ(net.predict(x).size(), 50u);
}

// Backward -----------------------------------------------------------------------

TEST(Backward, ZeroErrorAtTarget) {
    Network net(dense_mlp(5, 4, 6));
    const auto before = all_weights(net);
    Rng rng(6);
    const auto x = random_input(5, rng);
    const NeuronId label = 2;
    net.forward(x, 0, std::span(&label, 1), forced({std::nullopt, std::vector<NeuronId>{2}}));
    net.backward(0, std::span(&label, 1));
    EXPECT_EQ(net.layer(1).error(2, 0), 0.0);
    for (NeuronId a = 0; a < 4; ++a) EXPECT_EQ(net.layer(0).error(a, 0), 0.0);
    net.apply_updates(train_config().adam(), 1);
    EXPECT_EQ(all_weights(net), before);
    EXPECT_EQ(net.layer(1).adam_steps()[2], 1u);
}

TEST(Backward, RequiresForward) {
    Network net(dense_mlp(5, 4, 6));
    const NeuronId label = 1;
    EXPECT_THROW(net.backward(0, std::span(&label, 1)), std::logic_error);
}

TEST(Backward, MatchesDenseOracleGradients) {
    Network net(dense_mlp(9, 6, 4));
    const auto ref = oracle::snapshot(net);
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const auto x = random_input(9, rng);
        const std::vector<NeuronId> labels{static_cast<NeuronId>(trial % 4), static_cast<NeuronId>((trial + 1) % 4)};
        const auto expected = oracle::dense_forward_backward(ref, x.to_dense(), labels);
        const auto& t = net.forward(x, 0, labels);
        EXPECT_NEAR(t.loss, expected.loss, 1e-12);
        net.backward(0, labels);
        for (std::uint32_t l = 0; l < 2; ++l) {
            const Layer& layer = net.layer(l);
            for (NeuronId a = 0; a < layer.width(); ++a) {
                for (std::uint32_t i = 0; i < layer.in_dim(); ++i) {
                    EXPECT_NEAR(layer.weight_gradient(a, i), expected.grad_w[l][a * layer.in_dim() + i], 1e-12);
                }
                EXPECT_NEAR(layer.bias_gradient(a), expected.grad_b[l][a], 1e-12);
            }
        }
        net.reset_batch();
    }
}

TEST(Backward, FiniteDifferencesOnActiveSubnetwork) {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const std::uint32_t in = std::uniform_int_distribution<std::uint32_t>(3, 8)(rng);
        const std::uint32_t hidden = std::uniform_int_distribution<std::uint32_t>(3, 10)(rng);
        const std::uint32_t out = std::uniform_int_distribution<std::uint32_t>(3, 12)(rng);
        Network net(dense_mlp(in, hidden, out, 1, trial));
        std::vector<NeuronId> h(hidden), o(out);
        std::iota(h.begin(), h.end(), 0u);
        std::iota(o.begin(), o.end(), 0u);
        std::shuffle(h.begin(), h.end(), rng);
        std::shuffle(o.begin(), o.end(), rng);
        h.resize(std::max<std::size_t>(2, hidden / 2));
        o.resize(std::max<std::size_t>(2, out / 2));
        const std::vector<NeuronId> labels{o[0]};
        const auto x = random_input(in, rng, 0.7);
        const auto check = oracle::finite_difference_check(net, x, labels, forced({h, o}));
        EXPECT_GT(check.checked, 0u);
        EXPECT_LE(check.max_relative_error, 1e-4) << "trial " << trial;
    }
}

TEST(Backward, TouchesOnlyActiveWeights) {
    Rng rng(9);
    Network net(net_config(40, {dense_layer(30, Activation::ReLU), lsh_layer(300, 3, 6, 25)}, 1, 5));
    LocalityObserver obs(net);
    net.set_observer(&obs);
    for (int trial = 0; trial < 30; ++trial) {
        const auto x = random_input(40, rng, 0.2);
        const NeuronId label = std::uniform_int_distribution<NeuronId>(0, 299)(rng);
        const auto& t = net.forward(x, 0, std::span(&label, 1));
        net.backward(0, std::span(&label, 1));
        obs.allow_updates_from(t);
        net.apply_updates(train_config().adam(), 1);
    }
    EXPECT_GT(obs.updates, 0u);
    EXPECT_EQ(obs.violations, 0u);
}

TEST(Backward, UpdatedWeightFractionIsSSquared) {
    // Two adjacent layers of width 100 with 5 active neurons each: s = 0.05.
    Network net(net_config(10, {dense_layer(100, Activation::ReLU), dense_layer(100, Activation::Softmax)}, 1));
    Layer& h = net.layer(0);
    std::fill(h.weights().begin(), h.weights().end(), 0.1);
    LocalityObserver obs(net);
    net.set_observer(&obs);
    const auto x = SparseVector::from_pairs(10, {{0, 1.0}, {4, 2.0}});
    const std::vector<NeuronId> hidden{3, 17, 42, 60, 99};
    const std::vector<NeuronId> output{1, 5, 8, 13, 21};
    const NeuronId label = 5;
    const auto& t = net.forward(x, 0, std::span(&label, 1), forced({hidden, output}));
    ASSERT_EQ(net.layer_input(0, 1).nnz(), 5u);
    net.backward(0, std::span(&label, 1));
    obs.allow_updates_from(t);

    struct LayerCounter : AccessObserver {
        std::size_t weights = 0;
        void on_row(std::uint32_t layer, NeuronId, std::span<const std::uint32_t> inputs, AccessKind kind) override {
            if (layer == 1 && kind == AccessKind::Update) weights += inputs.size();
        }
    } counter;
    net.set_observer(&counter);
    net.apply_updates(train_config().adam(), 1);
    EXPECT_EQ(counter.weights, 25u);
    EXPECT_DOUBLE_EQ(static_cast<double>(counter.weights) / (100.0 * 100.0), 0.0025);
}

// apply_update -------------------------------------------------------------------

TEST(ApplyUpdate, ZeroGradientAdvancesStepOnly) {
    Network net(dense_mlp(4, 3, 2));
    const auto before = all_weights(net);
    const std::pair<std::uint32_t, Real> g{1, 0.0};
    net.layer(0).apply_update(2, std::span(&g, 1), 0.0, AdamConfig{});
    EXPECT_EQ(all_weights(net), before);
    EXPECT_EQ(net.layer(0).adam_steps()[2], 1u);
}

TEST(ApplyUpdate, FirstStepClosedForm) {
    Network net(dense_mlp(4, 3, 2));
    AdamConfig adam;
    adam.learning_rate = 0.01;
    const Real w0 = net.layer(0).row(1)[3];
    const Real g = 0.37;
    const std::pair<std::uint32_t, Real> grad{3, g};
    net.layer(0).apply_update(1, std::span(&grad, 1), 0.0, adam);
    EXPECT_NEAR(net.layer(0).row(1)[3], w0 - adam.learning_rate * g / (std::abs(g) + adam.eps), 1e-15);
    // Untouched coordinates keep zero moments.
    EXPECT_EQ(net.layer(0).adam_m()[1 * 4 + 0], 0.0);
}

TEST(ApplyUpdate, TwoStepsMatchDenseAdam) {
    Network net(dense_mlp(4, 3, 2));
    AdamConfig adam;
    adam.learning_rate = 0.05;
    Real w = net.layer(0).row(0)[2], m = 0, v = 0;
    const Real g = -0.8;
    for (int t = 1; t <= 2; ++t) {
        const std::pair<std::uint32_t, Real> grad{2, g};
        net.layer(0).apply_update(0, std::span(&grad, 1), 0.0, adam);
        m = adam.beta1 * m + (1 - adam.beta1) * g;
        v = adam.beta2 * v + (1 - adam.beta2) * g * g;
        w -= adam.learning_rate * (m / (1 - std::pow(adam.beta1, t))) /
             (std::sqrt(v / (1 - std::pow(adam.beta2, t))) + adam.eps);
    }
    EXPECT_NEAR(net.layer(0).row(0)[2], w, 1e-14);
}

TEST(ApplyUpdate, RejectsOutOfRangeIndex) {
    Network net(dense_mlp(4, 3, 2));
    const std::pair<std::uint32_t, Real> g{4, 1.0};
    EXPECT_THROW(net.layer(0).apply_update(0, std::span(&g, 1), 0.0, AdamConfig{}), std::out_of_range);
    EXPECT_THROW(net.layer(0).apply_update(3, {}, 0.0, AdamConfig{}), std::out_of_range);
}

// train_batch --------------------------------------------------------------------

namespace {

struct ToyData {
    std::vector<SparseVector> x;
    std::vector<std::vector<NeuronId>> y;

    std::vector<TrainingExample> batch(std::size_t start, std::size_t n) const {
        std::vector<TrainingExample> out;
        for (std::size_t i = start; i < start + n; ++i) out.push_back({x[i % x.size()], y[i % y.size()]});
        return out;
    }
};

ToyData toy_data(std::uint32_t d, std::uint32_t labels, std::size_t n, std::uint64_t seed) {
    SyntheticConfig c;
    c.num_features = d;
    c.num_labels = labels;
    c.train_examples = static_cast<std::uint32_t>(n);
    c.test_examples = 1;
    c.prototype_size = 6;
    c.kept_per_label = 4;
    c.noise_features = 1;
    c.max_labels = 1;
    c.seed = seed;
    const auto split = make_synthetic(c);
    ToyData out;
    for (const auto& e : split.train.examples) {
        out.x.push_back(e.features);
        out.y.push_back(e.labels);
    }
    return out;
}

}  // namespace

TEST(TrainBatch, SingleWorkerSingleExampleEqualsSequential) {
    const auto data = toy_data(20, 6, 10, 1);
    Network a(dense_mlp(20, 8, 6, 1));
    Network b(dense_mlp(20, 8, 6, 1));
    const auto cfg = train_config();
    for (std::size_t i = 0; i < 10; ++i) {
        const auto batch = data.batch(i, 1);
        a.train_batch(batch, i + 1, cfg);
        b.forward(data.x[i], 0, data.y[i]);
        b.backward(0, data.y[i]);
        b.apply_updates(cfg.adam(), 1);
    }
    EXPECT_EQ(all_weights(a), all_weights(b));
}

TEST(TrainBatch, DeterministicWithOneWorker) {
    const auto data = toy_data(30, 40, 64, 2);
    auto run = [&] {
        Network net(net_config(30, {dense_layer(16, Activation::ReLU), lsh_layer(40, 2, 4, 8)}, 8, 7));
        for (std::size_t i = 0; i < 40; ++i) net.train_batch(data.batch(i * 8, 8), i + 1, train_config());
        return all_weights(net);
    };
    EXPECT_EQ(run(), run());
}

TEST(TrainBatch, Errors) {
    Network net(dense_mlp(5, 4, 3, 2));
    EXPECT_THROW(net.train_batch({}, 1, train_config()), std::invalid_argument);
    const auto data = toy_data(20, 3, 3, 3);
    EXPECT_THROW(net.train_batch(data.batch(0, 3), 1, train_config()), std::invalid_argument);
    EXPECT_THROW(net.train_batch(data.batch(0, 1), 1, train_config()), DimensionMismatch);
}

TEST(TrainBatch, ReportsActiveFractionAndRebuilds) {
    const auto data = toy_data(30, 200, 64, 4);
    auto out = lsh_layer(200, 3, 5, 10);
    out.lsh.tables.n0 = 5;
    Network net(net_config(30, {dense_layer(16, Activation::ReLU), out}, 8, 2));
    bool rebuilt = false;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto stats = net.train_batch(data.batch(i * 8, 8), i + 1, train_config());
        ASSERT_EQ(stats.active_fraction.size(), 2u);
        EXPECT_DOUBLE_EQ(stats.active_fraction[0], 1.0);
        EXPECT_LT(stats.active_fraction[1], 0.5);
        EXPECT_TRUE(std::isfinite(stats.mean_loss));
        rebuilt = rebuilt || stats.rebuilt;
        EXPECT_EQ(stats.rebuilt, i + 1 == 5);
    }
    EXPECT_TRUE(rebuilt);
}

TEST(TrainBatch, DenseTrainingMatchesOracleTrajectory) {
    const auto data = toy_data(12, 5, 80, 5);
    Network net(dense_mlp(12, 6, 5, 4, 11));
    auto cfg = train_config();
    oracle::DenseTrainer ref(oracle::snapshot(net), cfg.adam());
    for (std::size_t it = 0; it < 50; ++it) {
        const auto batch = data.batch(it * 4, 4);
        std::vector<std::vector<Real>> xs;
        std::vector<std::vector<NeuronId>> ys;
        for (const auto& ex : batch) {
            std::vector<Real> dense(12, 0.0);
            for (std::size_t n = 0; n < ex.features.nnz(); ++n) dense[ex.features.indices[n]] = ex.features.values[n];
            xs.push_back(dense);
            ys.emplace_back(ex.labels.begin(), ex.labels.end());
        }
        const auto stats = net.train_batch(batch, it + 1, cfg);
        const Real expected = ref.step(xs, ys);
        ASSERT_NEAR(stats.mean_loss, expected, 1e-6) << "iteration " << it;
    }
}

TEST(TrainBatch, ConcurrentSlotsMatchSequential) {
    const auto data = toy_data(30, 60, 16, 6);
    const auto cfg_net = net_config(30, {dense_layer(16, Activation::ReLU), lsh_layer(60, 2, 4, 10)}, 16, 3);
    Network a(cfg_net);
    Network b(cfg_net);
    const auto batch = data.batch(0, 16);
    for (std::uint32_t s = 0; s < 16; ++s) a.forward(batch[s].features, s, batch[s].labels);
#pragma omp parallel for num_threads(4)
    for (int s = 0; s < 16; ++s) b.forward(batch[s].features, static_cast<std::uint32_t>(s), batch[s].labels);
    for (std::uint32_t s = 0; s < 16; ++s) {
        EXPECT_EQ(a.trace(s).active, b.trace(s).active);
        EXPECT_EQ(a.trace(s).output, b.trace(s).output);
        EXPECT_EQ(a.trace(s).loss, b.trace(s).loss);
    }
}

TEST(TrainBatch, WorkerCountsReachSimilarAccuracy) {
    const auto data = toy_data(40, 10, 400, 7);
    const auto held_out = toy_data(40, 10, 200, 7);
    auto p_at_1 = [&](int workers) {
        Network net(dense_mlp(40, 16, 10, 8, 5));
        for (std::size_t i = 0; i < 100; ++i) net.train_batch(data.batch(i * 8, 8), i + 1, train_config(workers));
        double total = 0;
        for (std::size_t i = 200; i < 400; ++i) {
            const auto ranked = net.predict(data.x[i % data.x.size()]);
            total += precision_at_k(ranked, data.y[i % data.y.size()], 1);
        }
        (void)held_out;
        return total / 200;
    };
    const double one = p_at_1(1);
    const double four = p_at_1(4);
    EXPECT_NEAR(one, four, 0.02);
    EXPECT_GT(one, 0.5);
}

// predict ------------------------------------------------------------------------

TEST(Predict, SingleOutput) {
    Network net(dense_mlp(4, 3, 1));
    const auto x = SparseVector::from_pairs(4, {{1, 1.0}});
    EXPECT_EQ(net.predict(x), (std::vector<NeuronId>{0}));
}

TEST(Predict, DenseRankingMatchesOracleArgsort) {
    Network net(dense_mlp(10, 6, 8));
    const auto ref = oracle::snapshot(net);
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_input(10, rng);
        const auto probs = oracle::dense_forward_backward(ref, x.to_dense(), {}).activations.back();
        std::vector<NeuronId> order(8);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(), [&](NeuronId a, NeuronId b) { return probs[a] > probs[b]; });
        EXPECT_EQ(net.predict(x), order);
    }
}

TEST(Predict, DegenerateTablesReturnTheirOnlyNeuron) {
    Network net(net_config(16, {lsh_layer(20, 3, 4, 5)}, 1));
    Rng rng(11);
    const auto x = random_input(16, rng);
    LshTables& tables = *net.layer(0).tables();
    tables.clear();
    const auto keys = tables.family().hash(x.view());
    tables.insert(7, keys);
    EXPECT_EQ(net.predict(x), (std::vector<NeuronId>{7}));
}

TEST(Predict, DoesNotForceLabelsAndLeavesSlotClean) {
    Network net(net_config(16, {lsh_layer(50, 3, 4, 5)}, 1));
    Rng rng(12);
    const auto x = random_input(16, rng);
    net.predict(x);
    for (NeuronId a = 0; a < 50; ++a) EXPECT_FALSE(net.layer(0).active(a, 0));
}
