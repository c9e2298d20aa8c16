#include "runs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <omp.h>
#include <random>
#include <sstream>

#include "slide/checkpoint.hpp"

namespace slide::runner {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void write_header(std::ostream& out, const RunConfig& config, const std::string& columns) {
    out << "# config_hash=" << config_hash(config) << '\n' << columns << '\n';
}

std::ofstream open_csv(const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    return out;
}

void write_row(std::ostream& out, const EvalRow& r) {
    out << r.iteration << ',' << r.wall_seconds << ',' << r.train_loss << ',' << r.test_p1 << ',' << r.test_p5;
    for (double f : r.active_fraction) out << ',' << f;
    out << '\n';
    out.flush();
}

std::vector<std::uint32_t> lsh_layers(const Network& net) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t l = 0; l < net.num_layers(); ++l) {
        if (net.layer(l).selection() == NeuronSelection::Lsh) out.push_back(l);
    }
    return out;
}

template <typename F>
double median_seconds(std::uint32_t repeats, F&& body) {
    std::vector<double> times;
    for (std::uint32_t r = 0; r < repeats; ++r) {
        const auto start = Clock::now();
        body(r);
        times.push_back(seconds_since(start));
    }
    std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
    return times[times.size() / 2];
}

}  // namespace

DataSplit load_data(const RunConfig& config) {
    if (config.train_path.empty()) {
        auto split = make_synthetic(config.synthetic);
        if (config.normalize) {
            l2_normalize(split.train);
            l2_normalize(split.test);
        }
        return {std::move(split.train), std::move(split.test)};
    }
    const LoadOptions options{config.normalize};
    DataSplit data{load_xc_file(config.train_path, options), load_xc_file(config.test_path, options)};
    if (data.train.num_features != data.test.num_features || data.train.num_labels != data.test.num_labels) {
        throw ConfigError("train and test headers disagree on feature or label count");
    }
    return data;
}

std::pair<double, double> evaluate(Network& net, const Dataset& test, std::uint32_t max_examples,
                                   std::uint64_t seed, int workers, bool dense) {
    std::vector<std::uint32_t> picked;
    if (test.size() > max_examples) {
        picked = make_batches(test.size(), max_examples, mix_seed(seed, 7)).front();
        std::sort(picked.begin(), picked.end());
    } else {
        picked.resize(test.size());
        std::iota(picked.begin(), picked.end(), 0u);
    }
    if (picked.empty()) return {0.0, 0.0};
    const int threads = std::clamp<int>(workers, 1, static_cast<int>(net.batch_slots()));
    const auto n = static_cast<std::int64_t>(picked.size());
    double p1 = 0, p5 = 0;
#pragma omp parallel for num_threads(threads) if (threads > 1) reduction(+ : p1, p5) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto slot = static_cast<std::uint32_t>(omp_get_thread_num());
        const Example& ex = test.examples[picked[i]];
        const auto ranked = net.predict(ex.features, slot, dense);
        p1 += precision_at_k(ranked, ex.labels, 1);
        p5 += precision_at_k(ranked, ex.labels, 5);
    }
    return {p1 / static_cast<double>(n), p5 / static_cast<double>(n)};
}

TrainResult run_train(const RunConfig& config, const DataSplit& data) {
    validate(config);
    if (data.train.size() == 0) throw ConfigError("training set is empty");
    Network net(network_config(config, data.train.num_features, data.train.num_labels));
    const auto lsh = lsh_layers(net);

    TrainResult result;
    result.csv_path = config.out_dir / "train.csv";
    std::ofstream csv = open_csv(result.csv_path);
    std::string columns = "iteration,wall_seconds,train_loss,test_p1,test_p5";
    for (std::uint32_t l : lsh) columns += ",active_fraction_layer" + std::to_string(l);
    write_header(csv, config, columns);

    double window_loss = 0;
    std::uint64_t window_batches = 0;
    std::vector<double> window_active(lsh.size(), 0.0);
    double total_output_active = 0;

    auto emit = [&](std::uint64_t iteration) {
        EvalRow row;
        row.iteration = iteration;
        row.wall_seconds = result.train_seconds;
        row.train_loss = window_batches ? window_loss / static_cast<double>(window_batches) : 0.0;
        std::tie(row.test_p1, row.test_p5) =
            evaluate(net, data.test, config.eval_examples, config.train.seed, config.train.workers,
                     config.eval_dense);
        for (double a : window_active) row.active_fraction.push_back(window_batches ? a / window_batches : 0.0);
        write_row(csv, row);
        result.rows.push_back(std::move(row));
        window_loss = 0;
        window_batches = 0;
        std::fill(window_active.begin(), window_active.end(), 0.0);
    };

    std::uint64_t iteration = 0;
    std::vector<TrainingExample> batch;
    bool done = false;
    for (std::uint32_t epoch = 0; epoch < config.train.epochs && !done; ++epoch) {
        const auto order = batches(data.train, config.train.batch_size, mix_seed(config.train.seed, 1000 + epoch));
        for (const auto& ids : order) {
            batch.clear();
            for (std::uint32_t i : ids) {
                batch.push_back({data.train.examples[i].features, data.train.examples[i].labels});
            }
            ++iteration;
            const auto start = Clock::now();
            const BatchStats stats = net.train_batch(batch, iteration, config.train);
            result.train_seconds += seconds_since(start);
            if (!std::isfinite(stats.mean_loss)) {
                std::ostringstream msg;
                msg << "training loss became " << stats.mean_loss << " at iteration " << iteration
                    << " (learning rate " << config.train.learning_rate << "); try a smaller learning rate";
                throw DivergenceError(msg.str());
            }
            window_loss += stats.mean_loss;
            ++window_batches;
            for (std::size_t j = 0; j < lsh.size(); ++j) window_active[j] += stats.active_fraction[lsh[j]];
            total_output_active += stats.active_fraction.back() * net.output_width();
            if (iteration % config.eval_every == 0) emit(iteration);
            if (config.max_iterations && iteration >= config.max_iterations) {
                done = true;
                break;
            }
        }
    }
    if (result.rows.empty() || result.rows.back().iteration != iteration) emit(iteration);
    result.full_output_p1 =
        config.eval_dense ? result.rows.back().test_p1
                          : evaluate(net, data.test, config.eval_examples, config.train.seed, config.train.workers, true)
                                .first;
    result.iterations = iteration;
    result.mean_output_active = iteration ? total_output_active / static_cast<double>(iteration) : 0.0;
    if (config.write_checkpoint) {
        result.checkpoint_path = config.out_dir / "model.slde";
        save_checkpoint(net, result.checkpoint_path);
    }
    return result;
}

TrainResult run_train(const RunConfig& config) {
    validate(config);
    return run_train(config, load_data(config));
}

std::vector<SamplerTiming> run_bench_samplers(const RunConfig& config) {
    const auto& b = config.bench;
    const std::uint32_t l = b.sampler_tables;
    if (l == 0) throw ConfigError("bench.sampler_tables must be >= 1");
    std::vector<SamplerTiming> out;
    for (std::uint32_t n : b.sample_sizes) {
        // n candidate ids over l buckets, drawn from a population of n.
        Rng rng(mix_seed(config.train.seed, n));
        std::uniform_int_distribution<NeuronId> id(0, n - 1);
        std::vector<std::vector<NeuronId>> buckets(l);
        for (std::uint32_t i = 0; i < n; ++i) buckets[i % l].push_back(id(rng));
        RawCandidates raw(buckets.begin(), buckets.end());

        SamplerConfig cfg;
        cfg.beta = std::max<std::uint32_t>(1, n / 2);
        cfg.min_freq = std::min<std::uint32_t>(2, l);
        SamplerScratch scratch(n);
        SampleReport report;
        for (SamplingStrategy s : {SamplingStrategy::Vanilla, SamplingStrategy::HardThreshold, SamplingStrategy::TopK}) {
            cfg.strategy = s;
            Rng probe(mix_seed(config.train.seed, 3));
            sample(raw, cfg, probe, scratch, report);  // warm-up
            const double t = median_seconds(b.sampler_repeats, [&](std::uint32_t) {
                sample(raw, cfg, probe, scratch, report);
            });
            out.push_back({s, n, t});
        }
    }
    return out;
}

std::vector<InsertionTiming> run_bench_insertion(const RunConfig& config) {
    const auto& b = config.bench;
    const std::uint32_t n = b.insertion_neurons, d = b.insertion_dim;
    Rng rng(mix_seed(config.train.seed, 11));
    std::normal_distribution<Real> gauss;
    std::vector<Real> weights(std::size_t{n} * d, 0.0);
    if (b.insertion_nnz == 0) {
        for (auto& w : weights) w = gauss(rng);
    } else {
        std::uniform_int_distribution<std::uint32_t> col(0, d - 1);
        for (std::uint32_t r = 0; r < n; ++r) {
            for (std::uint32_t j = 0; j < b.insertion_nnz; ++j) weights[std::size_t{r} * d + col(rng)] = gauss(rng);
        }
    }
    const WeightRows rows{weights, n, d};

    HashFamilyConfig hc = config.hash;
    hc.k_per_table = b.insertion_k;
    hc.num_tables = b.insertion_tables;
    hc.dim = d;
    hc.seed = mix_seed(config.train.seed, 12);

    std::vector<InsertionTiming> out;
    for (BucketPolicy policy : {BucketPolicy::Fifo, BucketPolicy::Reservoir}) {
        TableConfig tc;
        tc.bucket_capacity = b.insertion_capacity;
        tc.policy = policy;
        tc.incremental_simhash = false;
        tc.seed = mix_seed(config.train.seed, 13);
        LshTables tables(hc, tc);

        const double full = median_seconds(b.sampler_repeats, [&](std::uint32_t) { tables.build(rows); });
        std::vector<HashKey> codes;
        codes.reserve(std::size_t{n} * hc.num_tables);
        for (NeuronId a = 0; a < n; ++a) {
            const auto c = tables.codes_of(a);
            codes.insert(codes.end(), c.begin(), c.end());
        }
        const double insert = median_seconds(b.sampler_repeats, [&](std::uint32_t) {
            tables.clear();
            for (NeuronId a = 0; a < n; ++a) {
                tables.insert(a, std::span(codes).subspan(std::size_t{a} * hc.num_tables, hc.num_tables));
            }
        });
        std::uint64_t stored = 0;
        for (std::uint32_t t = 0; t < tables.num_tables(); ++t) {
            for (const Bucket& bucket : tables.table(t).buckets()) stored += bucket.occupancy();
        }
        out.push_back({policy, insert, full, stored});
    }
    return out;
}

std::vector<ScalingRow> run_scaling(const RunConfig& config, const DataSplit& data) {
    std::vector<ScalingRow> out;
    for (int workers : config.bench.scaling_workers) {
        RunConfig c = config;
        c.train.workers = workers;
        c.max_iterations = config.bench.scaling_iterations;
        c.train.epochs = std::numeric_limits<std::uint32_t>::max();
        c.eval_every = std::numeric_limits<std::uint64_t>::max();
        c.write_checkpoint = false;
        c.out_dir = config.out_dir / ("scaling_w" + std::to_string(workers));
        const auto r = run_train(c, data);
        out.push_back({workers, r.train_seconds, r.final_row().test_p1});
    }
    return out;
}

std::vector<ScalingRow> run_scaling(const RunConfig& config) {
    validate(config);
    return run_scaling(config, load_data(config));
}

void write_csv(std::ostream& out, const RunConfig& config, const std::vector<SamplerTiming>& rows) {
    write_header(out, config, "strategy,n,seconds");
    for (const auto& r : rows) out << to_string(r.strategy) << ',' << r.n << ',' << r.seconds << '\n';
}

void write_csv(std::ostream& out, const RunConfig& config, const std::vector<InsertionTiming>& rows) {
    write_header(out, config, "policy,insert_seconds,full_seconds,stored");
    for (const auto& r : rows) {
        out << to_string(r.policy) << ',' << r.insert_seconds << ',' << r.full_seconds << ',' << r.stored << '\n';
    }
}

void write_csv(std::ostream& out, const RunConfig& config, const std::vector<ScalingRow>& rows) {
    write_header(out, config, "workers,seconds,final_p1");
    for (const auto& r : rows) out << r.workers << ',' << r.seconds << ',' << r.final_p1 << '\n';
}

}  // namespace slide::runner
