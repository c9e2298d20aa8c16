#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slide/hash_family.hpp"
#include "slide/types.hpp"

namespace slide {

enum class BucketPolicy { Fifo, Reservoir };

std::string_view to_string(BucketPolicy policy) noexcept;
BucketPolicy parse_bucket_policy(std::string_view name);

// Row-major view of a layer's weights: one row per neuron.
struct WeightRows {
    std::span<const Real> data;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;

    std::span<const Real> row(std::uint32_t r) const noexcept {
        return data.subspan(std::size_t{r} * cols, cols);
    }
};

// Rebuild t (1-based) fires at iteration round(sum_{i<t} n0 * exp(lambda * i)).
class RebuildSchedule {
public:
    RebuildSchedule() : RebuildSchedule(50, 0.0) {}
    RebuildSchedule(std::uint32_t n0, double lambda);

    static std::uint64_t iteration_of(std::uint32_t t, std::uint32_t n0, double lambda) noexcept;

    std::uint32_t n0() const noexcept { return n0_; }
    double lambda() const noexcept { return lambda_; }
    std::uint32_t completed() const noexcept { return completed_; }
    std::uint64_t next_at() const noexcept { return next_at_; }
    bool due(std::uint64_t iteration) const noexcept { return iteration >= next_at_; }
    void advance() noexcept;

private:
    std::uint32_t n0_;
    double lambda_;
    std::uint32_t completed_ = 0;
    double partial_sum_ = 0.0;
    std::uint64_t next_at_ = 0;
};

// Fixed-capacity bucket of neuron ids. FIFO overwrites the oldest entry once
// full; Reservoir keeps a uniform sample of every id offered since the last
// clear, using skip-ahead (Algorithm L) so most offers cost one comparison.
class Bucket {
public:
    void insert_fifo(NeuronId id, std::uint32_t capacity) {
        ++count_;
        if (slots_.size() < capacity) {
            slots_.push_back(id);
            return;
        }
        slots_[head_] = id;
        head_ = head_ + 1 == capacity ? 0 : head_ + 1;
    }
    void insert_reservoir(NeuronId id, std::uint32_t capacity, Rng& rng) {
        // next_replace_ stays 0 while filling, so skipped offers cost one compare.
        if (++count_ < next_replace_) return;
        reservoir_slow_path(id, capacity, rng);
    }

    // Stored ids in slot order.
    std::span<const NeuronId> contents() const noexcept { return slots_; }
    // Stored ids oldest-first (FIFO insertion order).
    std::vector<NeuronId> ordered() const;
    std::uint32_t occupancy() const noexcept { return static_cast<std::uint32_t>(slots_.size()); }
    // Offers since the last clear.
    std::uint64_t count() const noexcept { return count_; }

private:
    void reservoir_slow_path(NeuronId id, std::uint32_t capacity, Rng& rng);
    void schedule_next_replacement(std::uint32_t capacity, Rng& rng);

    std::vector<NeuronId> slots_;
    std::uint64_t count_ = 0;
    std::uint32_t head_ = 0;  // oldest slot once a FIFO bucket is full
    std::uint64_t next_replace_ = 0;
    double reservoir_w_ = 0.0;
};

// One table: bucket key -> bucket. Keys of at most kDirectKeyBits bits index a
// flat array; wider keys go through a hash map.
class HashTable {
public:
    static constexpr unsigned kDirectKeyBits = 16;

    explicit HashTable(unsigned key_bits);

    const Bucket* find(HashKey key) const noexcept;
    Bucket& get_or_create(HashKey key);
    void clear();
    std::size_t num_buckets() const noexcept { return buckets_.size(); }
    std::span<const Bucket> buckets() const noexcept { return buckets_; }

private:
    static constexpr std::uint32_t kNone = 0xffffffffu;
    bool direct_;
    std::vector<std::uint32_t> direct_index_;
    std::unordered_map<HashKey, std::uint32_t> sparse_index_;
    std::vector<HashKey> used_keys_;
    std::vector<Bucket> buckets_;
};

// Per-table bucket contents for one query, in table order.
using RawCandidates = std::vector<std::span<const NeuronId>>;

struct TableConfig {
    std::uint32_t bucket_capacity = 128;
    BucketPolicy policy = BucketPolicy::Fifo;
    std::uint32_t n0 = 50;
    double lambda = 0.0;
    // Cache w.r per neuron and re-hash only changed coordinates on rebuild
    // (SimHash only).
    bool incremental_simhash = true;
    std::uint64_t seed = 0;
};

void validate(const TableConfig& config);

// The (K, L) structure for one layer.
class LshTables {
public:
    LshTables(const HashFamilyConfig& hash_config, const TableConfig& table_config);

    const HashFamily& family() const noexcept { return *family_; }
    const TableConfig& config() const noexcept { return config_; }
    const RebuildSchedule& schedule() const noexcept { return schedule_; }
    std::uint32_t num_tables() const noexcept { return family_->num_tables(); }
    std::uint32_t num_neurons() const noexcept { return num_neurons_; }
    const HashTable& table(std::uint32_t t) const noexcept { return tables_[t]; }

    // Hashes every row and inserts it into all L tables. Row dims must match
    // the family dim.
    void build(WeightRows weights, int threads = 1);

    // Probes exactly one bucket per table.
    RawCandidates query(SparseView input) const;
    void query(SparseView input, RawCandidates& out) const;
    void query_codes(std::span<const HashKey> codes, RawCandidates& out) const;

    // Rebuilds when the schedule is due. Neurons never marked dirty since
    // the previous (re)build keep their codes without being re-hashed.
    bool maybe_rebuild(std::uint64_t iteration, WeightRows weights, int threads = 1);
    void rebuild(WeightRows weights, int threads = 1);

    // Flags a neuron whose weights changed. Safe to call concurrently for
    // distinct ids.
    void mark_dirty(NeuronId id) noexcept;
    void mark_all_dirty() noexcept;

    // Applies each (index, delta) to the weights as last hashed, updates only
    // the cached projections that store a nonzero entry at a changed index,
    // and returns the neuron's refreshed codes. Bucket membership is left as
    // is until the next rebuild.
    HashCodes incremental_simhash_update(NeuronId id,
                                         std::span<const std::pair<std::uint32_t, Real>> changed_dims);
    bool has_simhash_cache() const noexcept { return !projection_cache_.empty(); }
    std::span<const SimHash::Accumulator> cached_projections(NeuronId id) const;

    // Current codes for a neuron (as last computed).
    std::span<const HashKey> codes_of(NeuronId id) const;

    // Inserts a single id under precomputed codes, honouring the policy.
    void insert(NeuronId id, std::span<const HashKey> codes);
    void clear();

private:
    void rehash(WeightRows weights, bool only_dirty, int threads);
    void refresh_simhash(NeuronId id, std::span<const Real> row);
    void apply_change(NeuronId id, std::span<SimHash::Accumulator> cache, std::uint32_t index, Real new_value);
    void insert_all(int threads);
    const SimHash* simhash() const noexcept;

    std::unique_ptr<HashFamily> family_;
    TableConfig config_;
    RebuildSchedule schedule_;
    std::vector<HashTable> tables_;
    std::vector<Rng> table_rngs_;
    std::uint32_t num_neurons_ = 0;
    std::vector<HashKey> codes_;             // num_neurons x L
    std::vector<std::uint8_t> dirty_;
    std::vector<SimHash::Accumulator> projection_cache_;  // num_neurons x KL (SimHash)
    std::vector<Real> hashed_weights_;       // weights at the time of hashing
};

}  // namespace slide
