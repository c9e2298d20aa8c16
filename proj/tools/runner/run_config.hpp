#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slide/dataset.hpp"
#include "slide/hash_family.hpp"
#include "slide/lsh_tables.hpp"
#include "slide/network.hpp"
#include "slide/sampler.hpp"

namespace slide::runner {

struct BenchConfig {
    // run_bench_samplers
    std::vector<std::uint32_t> sample_sizes{1'000, 10'000, 100'000};
    std::uint32_t sampler_tables = 50;
    std::uint32_t sampler_repeats = 5;
    // run_bench_insertion
    std::uint32_t insertion_neurons = 2'000;
    std::uint32_t insertion_dim = 100'000;
    std::uint32_t insertion_nnz = 0;  // 0 = dense rows
    std::uint32_t insertion_k = 4;
    std::uint32_t insertion_tables = 10;
    std::uint32_t insertion_capacity = 16;
    // run_scaling
    std::vector<int> scaling_workers{1, 2, 4, 8};
    std::uint64_t scaling_iterations = 200;
};

struct RunConfig {
    TrainConfig train;
    HashFamilyConfig hash;
    SamplerConfig sampler;
    std::uint32_t bucket_capacity = 128;
    BucketPolicy bucket_policy = BucketPolicy::Fifo;

    std::uint32_t hidden = 128;
    NeuronSelection output_selection = NeuronSelection::Lsh;
    // Per-instance draws when output_selection is Uniform.
    std::uint32_t uniform_count = 0;

    std::filesystem::path train_path;
    std::filesystem::path test_path;
    bool normalize = false;
    // Used when no train path is given.
    SyntheticConfig synthetic;

    std::filesystem::path out_dir = "slide_out";
    std::uint64_t eval_every = 50;
    std::uint32_t eval_examples = 10'000;
    // Score every output neuron at evaluation instead of the sampled set.
    bool eval_dense = false;
    // Stop after this many iterations (0 = run every epoch to completion).
    std::uint64_t max_iterations = 0;
    bool write_checkpoint = true;

    BenchConfig bench;
};

// Throws ConfigError on the first invalid field, including missing paths.
void validate(const RunConfig& config);

// Unknown keys and ill-typed values raise ConfigError.
RunConfig parse_run_config(const std::string& toml_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical TOML rendering of every field; load_run_config accepts it back.
std::string to_toml(const RunConfig& config);
// FNV-1a of to_toml with the worker count and output directory left out,
// rendered as 16 hex digits.
std::string config_hash(const RunConfig& config);

// Applies SLIDE_THREADS when it is set to a positive integer.
void apply_environment(RunConfig& config);

NetworkConfig network_config(const RunConfig& config, std::uint32_t input_dim, std::uint32_t num_labels);

}  // namespace slide::runner
