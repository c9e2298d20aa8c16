#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace slide::runner {

namespace {

// Reads typed keys from one TOML table and rejects keys nobody asked for.
class Section {
public:
    Section(const toml::table& root, std::string name) : name_(std::move(name)) {
        if (const auto* node = root.get(name_)) {
            table_ = node->as_table();
            if (!table_) throw ConfigError("[" + name_ + "] must be a table");
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        const toml::node* node = find(key);
        if (!node) return;
        if constexpr (std::is_same_v<T, bool>) {
            out = require(node->value<bool>(), key, "a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            const auto v = require(node->value_exact<std::int64_t>(), key, "an integer");
            if (v < 0 || static_cast<std::uint64_t>(v) > std::numeric_limits<T>::max()) {
                throw ConfigError(where(key) + " is out of range");
            }
            out = static_cast<T>(v);
        } else if constexpr (std::is_floating_point_v<T>) {
            out = require(node->value<double>(), key, "a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            out = require(node->value<std::string>(), key, "a string");
        } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
            out = require(node->value<std::string>(), key, "a string");
        } else {
            const auto* array = node->as_array();
            if (!array || array->empty()) throw ConfigError(where(key) + " must be a non-empty integer array");
            out.clear();
            for (const auto& item : *array) {
                const auto v = item.value_exact<std::int64_t>();
                if (!v || *v < 1 || *v > std::numeric_limits<std::int32_t>::max()) {
                    throw ConfigError(where(key) + " must hold positive integers");
                }
                out.push_back(static_cast<typename T::value_type>(*v));
            }
        }
    }

    void finish() const {
        if (!table_) return;
        for (const auto& [key, value] : *table_) {
            if (!used_.count(std::string(key.str()))) throw ConfigError("unknown key " + where(key.str()));
        }
    }

private:
    const toml::node* find(const char* key) {
        used_.insert(key);
        return table_ ? table_->get(key) : nullptr;
    }

    template <typename V>
    V require(std::optional<V> v, const char* key, const char* what) const {
        if (!v) throw ConfigError(where(key) + " must be " + what);
        return *v;
    }

    std::string where(std::string_view key) const { return name_ + "." + std::string(key); }

    std::string name_;
    const toml::table* table_ = nullptr;
    std::set<std::string> used_;
};

const std::set<std::string>& known_sections() {
    static const std::set<std::string> names{"data",   "synthetic", "model", "hash",   "sampler",
                                             "tables", "train",     "eval",  "output", "bench"};
    return names;
}

template <typename Parse>
void read_enum(Section& s, const char* key, Parse parse) {
    std::string name;
    s.read(key, name);
    if (!name.empty()) parse(name);
}

}  // namespace

void validate(const RunConfig& c) {
    validate(c.train);
    auto hash = c.hash;
    hash.dim = c.hidden;
    validate(hash);
    validate(c.sampler, c.hash.num_tables);
    TableConfig tables;
    tables.bucket_capacity = c.bucket_capacity;
    tables.n0 = c.train.n0;
    tables.lambda = c.train.lambda;
    validate(tables);
    if (c.hidden == 0) throw ConfigError("model.hidden must be >= 1");
    if (c.output_selection == NeuronSelection::Uniform && c.uniform_count == 0) {
        throw ConfigError("model.uniform_count must be >= 1 for uniform output selection");
    }
    if (c.eval_every == 0) throw ConfigError("eval.every must be >= 1");
    if (c.eval_examples == 0) throw ConfigError("eval.examples must be >= 1");
    if (c.train_path.empty() != c.test_path.empty()) {
        throw ConfigError("data.train and data.test must be given together");
    }
    for (const auto& p : {c.train_path, c.test_path}) {
        if (!p.empty() && !std::filesystem::exists(p)) throw ConfigError("data file not found: " + p.string());
    }
    if (c.bench.sampler_repeats == 0) throw ConfigError("bench.sampler_repeats must be >= 1");
    if (c.bench.insertion_neurons == 0 || c.bench.insertion_dim == 0) {
        throw ConfigError("bench insertion sizes must be >= 1");
    }
    if (c.bench.insertion_nnz > c.bench.insertion_dim) throw ConfigError("bench.insertion_nnz exceeds the dim");
}

namespace {

RunConfig parse_fields(const std::string& text) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config: " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
    for (const auto& [key, value] : root) {
        if (!known_sections().count(std::string(key.str()))) {
            throw ConfigError("unknown config section [" + std::string(key.str()) + "]");
        }
    }

    RunConfig c;
    Section data(root, "data");
    data.read("train", c.train_path);
    data.read("test", c.test_path);
    data.read("normalize", c.normalize);
    data.finish();

    Section syn(root, "synthetic");
    auto& sc = c.synthetic;
    syn.read("num_features", sc.num_features);
    syn.read("num_labels", sc.num_labels);
    syn.read("train_examples", sc.train_examples);
    syn.read("test_examples", sc.test_examples);
    syn.read("min_labels", sc.min_labels);
    syn.read("max_labels", sc.max_labels);
    syn.read("prototype_size", sc.prototype_size);
    syn.read("kept_per_label", sc.kept_per_label);
    syn.read("noise_features", sc.noise_features);
    syn.read("zipf", sc.zipf);
    syn.read("num_clusters", sc.num_clusters);
    syn.read("cluster_features", sc.cluster_features);
    syn.read("seed", sc.seed);
    syn.finish();

    Section model(root, "model");
    model.read("hidden", c.hidden);
    read_enum(model, "output", [&](const std::string& s) { c.output_selection = parse_neuron_selection(s); });
    model.read("uniform_count", c.uniform_count);
    model.finish();

    Section hash(root, "hash");
    read_enum(hash, "family", [&](const std::string& s) { c.hash.family = parse_hash_family(s); });
    hash.read("k", c.hash.k_per_table);
    hash.read("l", c.hash.num_tables);
    hash.read("simhash_sparsity", c.hash.simhash_sparsity);
    hash.read("wta_bin_size", c.hash.wta_bin_size);
    hash.read("doph_top_k", c.hash.doph_top_k);
    hash.finish();

    Section sampler(root, "sampler");
    read_enum(sampler, "strategy", [&](const std::string& s) { c.sampler.strategy = parse_sampling_strategy(s); });
    sampler.read("beta", c.sampler.beta);
    sampler.read("min_freq", c.sampler.min_freq);
    sampler.finish();

    Section tables(root, "tables");
    tables.read("bucket_capacity", c.bucket_capacity);
    read_enum(tables, "policy", [&](const std::string& s) { c.bucket_policy = parse_bucket_policy(s); });
    tables.read("n0", c.train.n0);
    tables.read("lambda", c.train.lambda);
    tables.finish();

    Section train(root, "train");
    train.read("batch_size", c.train.batch_size);
    train.read("learning_rate", c.train.learning_rate);
    train.read("beta1", c.train.adam_beta1);
    train.read("beta2", c.train.adam_beta2);
    train.read("eps", c.train.adam_eps);
    train.read("epochs", c.train.epochs);
    train.read("seed", c.train.seed);
    int workers = c.train.workers;
    train.read("workers", workers);
    c.train.workers = workers;
    train.read("max_iterations", c.max_iterations);
    train.finish();

    Section eval(root, "eval");
    eval.read("every", c.eval_every);
    eval.read("examples", c.eval_examples);
    eval.read("dense", c.eval_dense);
    eval.finish();

    Section output(root, "output");
    output.read("dir", c.out_dir);
    output.read("checkpoint", c.write_checkpoint);
    output.finish();

    Section bench(root, "bench");
    auto& b = c.bench;
    bench.read("sample_sizes", b.sample_sizes);
    bench.read("sampler_tables", b.sampler_tables);
    bench.read("sampler_repeats", b.sampler_repeats);
    bench.read("insertion_neurons", b.insertion_neurons);
    bench.read("insertion_dim", b.insertion_dim);
    bench.read("insertion_nnz", b.insertion_nnz);
    bench.read("insertion_k", b.insertion_k);
    bench.read("insertion_tables", b.insertion_tables);
    bench.read("insertion_capacity", b.insertion_capacity);
    bench.read("scaling_workers", b.scaling_workers);
    bench.read("scaling_iterations", b.scaling_iterations);
    bench.finish();
    return c;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig c = parse_fields(text);
    validate(c);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream text;
    text << in.rdbuf();
    RunConfig c = parse_fields(text.str());
    const auto base = path.parent_path();
    for (auto* p : {&c.train_path, &c.test_path}) {
        if (!p->empty() && p->is_relative()) *p = base / *p;
    }
    validate(c);
    return c;
}

namespace {

toml::table render(const RunConfig& c, bool for_hash) {
    auto i64 = [](auto v) { return static_cast<std::int64_t>(v); };
    auto int_array = [&](const auto& values) {
        toml::array a;
        for (auto v : values) a.push_back(i64(v));
        return a;
    };
    const auto& sc = c.synthetic;
    const auto& b = c.bench;
    toml::table out{
        {"data", toml::table{{"train", c.train_path.generic_string()},
                             {"test", c.test_path.generic_string()},
                             {"normalize", c.normalize}}},
        {"synthetic", toml::table{{"num_features", i64(sc.num_features)},
                                  {"num_labels", i64(sc.num_labels)},
                                  {"train_examples", i64(sc.train_examples)},
                                  {"test_examples", i64(sc.test_examples)},
                                  {"min_labels", i64(sc.min_labels)},
                                  {"max_labels", i64(sc.max_labels)},
                                  {"prototype_size", i64(sc.prototype_size)},
                                  {"kept_per_label", i64(sc.kept_per_label)},
                                  {"noise_features", i64(sc.noise_features)},
                                  {"zipf", sc.zipf},
                                  {"num_clusters", i64(sc.num_clusters)},
                                  {"cluster_features", i64(sc.cluster_features)},
                                  {"seed", i64(sc.seed)}}},
        {"model", toml::table{{"hidden", i64(c.hidden)},
                              {"output", std::string(to_string(c.output_selection))},
                              {"uniform_count", i64(c.uniform_count)}}},
        {"hash", toml::table{{"family", std::string(to_string(c.hash.family))},
                             {"k", i64(c.hash.k_per_table)},
                             {"l", i64(c.hash.num_tables)},
                             {"simhash_sparsity", c.hash.simhash_sparsity},
                             {"wta_bin_size", i64(c.hash.wta_bin_size)},
                             {"doph_top_k", i64(c.hash.doph_top_k)}}},
        {"sampler", toml::table{{"strategy", std::string(to_string(c.sampler.strategy))},
                                {"beta", i64(c.sampler.beta)},
                                {"min_freq", i64(c.sampler.min_freq)}}},
        {"tables", toml::table{{"bucket_capacity", i64(c.bucket_capacity)},
                               {"policy", std::string(to_string(c.bucket_policy))},
                               {"n0", i64(c.train.n0)},
                               {"lambda", c.train.lambda}}},
        {"train", toml::table{{"batch_size", i64(c.train.batch_size)},
                              {"learning_rate", c.train.learning_rate},
                              {"beta1", c.train.adam_beta1},
                              {"beta2", c.train.adam_beta2},
                              {"eps", c.train.adam_eps},
                              {"epochs", i64(c.train.epochs)},
                              {"seed", i64(c.train.seed)},
                              {"max_iterations", i64(c.max_iterations)}}},
        {"eval", toml::table{{"every", i64(c.eval_every)}, {"examples", i64(c.eval_examples)}, {"dense", c.eval_dense}}},
        {"output", toml::table{{"checkpoint", c.write_checkpoint}}},
        {"bench", toml::table{{"sample_sizes", int_array(b.sample_sizes)},
                              {"sampler_tables", i64(b.sampler_tables)},
                              {"sampler_repeats", i64(b.sampler_repeats)},
                              {"insertion_neurons", i64(b.insertion_neurons)},
                              {"insertion_dim", i64(b.insertion_dim)},
                              {"insertion_nnz", i64(b.insertion_nnz)},
                              {"insertion_k", i64(b.insertion_k)},
                              {"insertion_tables", i64(b.insertion_tables)},
                              {"insertion_capacity", i64(b.insertion_capacity)},
                              {"scaling_workers", int_array(b.scaling_workers)},
                              {"scaling_iterations", i64(b.scaling_iterations)}}},
    };
    if (!for_hash) {
        out["train"].as_table()->insert("workers", i64(c.train.workers));
        out["output"].as_table()->insert("dir", c.out_dir.generic_string());
    }
    return out;
}

}  // namespace

std::string to_toml(const RunConfig& c) {
    std::ostringstream out;
    out << render(c, false) << '\n';
    return out.str();
}

std::string config_hash(const RunConfig& c) {
    std::ostringstream text;
    text << render(c, true);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text.str()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17] = {};
    const auto res = std::to_chars(buf, buf + 16, h, 16);
    std::string hex(buf, res.ptr);
    return std::string(16 - hex.size(), '0') + hex;
}

void apply_environment(RunConfig& c) {
    const char* env = std::getenv("SLIDE_THREADS");
    if (!env || !*env) return;
    int threads = 0;
    const auto* end = env + std::char_traits<char>::length(env);
    const auto res = std::from_chars(env, end, threads);
    if (res.ec != std::errc{} || res.ptr != end || threads < 1) {
        throw ConfigError("SLIDE_THREADS must be a positive integer, got '" + std::string(env) + "'");
    }
    c.train.workers = threads;
}

NetworkConfig network_config(const RunConfig& c, std::uint32_t input_dim, std::uint32_t num_labels) {
    NetworkConfig net;
    net.input_dim = input_dim;
    net.batch_slots = c.train.batch_size;
    net.seed = c.train.seed;
    LayerConfig hidden;
    hidden.width = c.hidden;
    hidden.activation = Activation::ReLU;
    LayerConfig out;
    out.width = num_labels;
    out.activation = Activation::Softmax;
    out.selection = c.output_selection;
    out.uniform_count = c.uniform_count;
    out.lsh.hash = c.hash;
    out.lsh.hash.dim = 0;
    out.lsh.sampler = c.sampler;
    out.lsh.tables.bucket_capacity = c.bucket_capacity;
    out.lsh.tables.policy = c.bucket_policy;
    out.lsh.tables.n0 = c.train.n0;
    out.lsh.tables.lambda = c.train.lambda;
    net.layers = {hidden, out};
    return net;
}

}  // namespace slide::runner
