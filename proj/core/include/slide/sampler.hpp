#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "slide/lsh_tables.hpp"
#include "slide/types.hpp"

namespace slide {

enum class SamplingStrategy { Vanilla, TopK, HardThreshold };

std::string_view to_string(SamplingStrategy strategy) noexcept;
SamplingStrategy parse_sampling_strategy(std::string_view name);

struct SamplerConfig {
    SamplingStrategy strategy = SamplingStrategy::Vanilla;
    // Target number of active neurons.
    std::uint32_t beta = 128;
    // Minimum bucket hits for HardThreshold.
    std::uint32_t min_freq = 1;
};

// Throws ConfigError unless beta >= 1 and 1 <= min_freq <= num_tables.
void validate(const SamplerConfig& config, std::uint32_t num_tables);

struct SampleReport {
    std::vector<NeuronId> active_ids;
    std::uint32_t tables_probed = 0;
    // Occurrence count of every candidate seen in the probed tables.
    std::vector<std::pair<NeuronId, std::uint32_t>> frequencies;

    void clear() noexcept {
        active_ids.clear();
        tables_probed = 0;
        frequencies.clear();
    }
};

// Flat per-layer counters reused across calls; O(1) increment and a reset
// proportional to the ids touched.
class SamplerScratch {
public:
    explicit SamplerScratch(std::uint32_t layer_width = 0) : counts_(layer_width, 0) {}

    void resize(std::uint32_t layer_width) { counts_.assign(layer_width, 0); }
    std::uint32_t width() const noexcept { return static_cast<std::uint32_t>(counts_.size()); }

    // Returns the count after incrementing.
    std::uint32_t bump(NeuronId id);
    std::uint32_t count(NeuronId id) const noexcept { return counts_[id]; }
    const std::vector<NeuronId>& touched() const noexcept { return touched_; }
    void reset() noexcept;

private:
    std::vector<std::uint32_t> counts_;
    std::vector<NeuronId> touched_;
};

// Probes tables in uniformly random order, taking whole buckets, until at
// least beta distinct ids are collected or every table has been probed.
void vanilla_sample(const RawCandidates& raw, const SamplerConfig& cfg, Rng& rng,
                    SamplerScratch& scratch, SampleReport& out);
// Counts hits over all tables and keeps the beta most frequent ids
// (frequency descending, then id ascending).
void topk_sample(const RawCandidates& raw, const SamplerConfig& cfg, SamplerScratch& scratch,
                 SampleReport& out);
// Keeps every id with at least min_freq hits, in first-seen order.
void hard_threshold_sample(const RawCandidates& raw, const SamplerConfig& cfg, SamplerScratch& scratch,
                           SampleReport& out);

// Dispatches on cfg.strategy. `rng` is consumed only by Vanilla.
void sample(const RawCandidates& raw, const SamplerConfig& cfg, Rng& rng, SamplerScratch& scratch,
            SampleReport& out);

SampleReport vanilla_sample(const RawCandidates& raw, const SamplerConfig& cfg, Rng& rng,
                            std::uint32_t layer_width);
SampleReport topk_sample(const RawCandidates& raw, const SamplerConfig& cfg, std::uint32_t layer_width);
SampleReport hard_threshold_sample(const RawCandidates& raw, const SamplerConfig& cfg,
                                   std::uint32_t layer_width);

// Closed-form selection probability of one neuron with per-function collision
// probability p, K functions per table and L tables.
//
//   Vanilla:        q^tau * (1 - q)^(L - tau),             q = p^K
//   HardThreshold:  sum_{i=m}^{L} C(L, i) q^i (1 - q)^(L - i)
//
// `tau_or_m` is tau for Vanilla and m for HardThreshold. TopK has no closed
// form and is rejected. Throws std::invalid_argument on out-of-range input.
double retrieval_probability(SamplingStrategy strategy, double p, std::uint32_t k, std::uint32_t l,
                             std::uint32_t tau_or_m);

// SimHash per-bit collision probability for two vectors at the given cosine.
double simhash_collision_probability(double cosine);

}  // namespace slide
