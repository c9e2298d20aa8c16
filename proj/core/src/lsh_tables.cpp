#include "slide/lsh_tables.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace slide {

std::string_view to_string(BucketPolicy policy) noexcept {
    return policy == BucketPolicy::Fifo ? "fifo" : "reservoir";
}

BucketPolicy parse_bucket_policy(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "fifo") return BucketPolicy::Fifo;
    if (lower == "reservoir") return BucketPolicy::Reservoir;
    throw ConfigError("unknown bucket policy '" + std::string(name) + "'");
}

// RebuildSchedule ------------------------------------------------------------

RebuildSchedule::RebuildSchedule(std::uint32_t n0, double lambda)
    : n0_(n0), lambda_(lambda), partial_sum_(n0), next_at_(static_cast<std::uint64_t>(std::llround(partial_sum_))) {}

std::uint64_t RebuildSchedule::iteration_of(std::uint32_t t, std::uint32_t n0, double lambda) noexcept {
    double sum = 0.0;
    for (std::uint32_t i = 0; i < t; ++i) sum += n0 * std::exp(lambda * i);
    return static_cast<std::uint64_t>(std::llround(sum));
}

void RebuildSchedule::advance() noexcept {
    ++completed_;
    partial_sum_ += n0_ * std::exp(lambda_ * completed_);
    next_at_ = static_cast<std::uint64_t>(std::llround(partial_sum_));
}

// Bucket -------------------------------------------------------------------

namespace {

// Uniform on the open interval (0, 1).
double open_unit(Rng& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

void Bucket::reservoir_slow_path(NeuronId id, std::uint32_t capacity, Rng& rng) {
    if (slots_.size() < capacity) {
        slots_.push_back(id);
        if (slots_.size() == capacity) {
            reservoir_w_ = 1.0;
            next_replace_ = count_;
            schedule_next_replacement(capacity, rng);
        }
        return;
    }
    slots_[std::uniform_int_distribution<std::uint32_t>(0, capacity - 1)(rng)] = id;
    schedule_next_replacement(capacity, rng);
}

void Bucket::schedule_next_replacement(std::uint32_t capacity, Rng& rng) {
    reservoir_w_ *= std::exp(std::log(open_unit(rng)) / capacity);
    const double skip = std::floor(std::log(open_unit(rng)) / std::log1p(-reservoir_w_));
    constexpr double kMaxSkip = 0x1.0p62;
    next_replace_ += static_cast<std::uint64_t>(std::min(skip, kMaxSkip)) + 1;
}

std::vector<NeuronId> Bucket::ordered() const {
    std::vector<NeuronId> out(slots_.begin(), slots_.end());
    std::rotate(out.begin(), out.begin() + head_, out.end());
    return out;
}

// HashTable ----------------------------------------------------------------

HashTable::HashTable(unsigned key_bits) : direct_(key_bits <= kDirectKeyBits) {
    if (direct_) direct_index_.assign(std::size_t{1} << key_bits, kNone);
}

const Bucket* HashTable::find(HashKey key) const noexcept {
    if (direct_) {
        if (key >= direct_index_.size()) return nullptr;
        const std::uint32_t idx = direct_index_[key];
        return idx == kNone ? nullptr : &buckets_[idx];
    }
    const auto it = sparse_index_.find(key);
    return it == sparse_index_.end() ? nullptr : &buckets_[it->second];
}

Bucket& HashTable::get_or_create(HashKey key) {
    std::uint32_t* slot = nullptr;
    if (direct_) {
        slot = &direct_index_.at(key);
    } else {
        slot = &sparse_index_.try_emplace(key, kNone).first->second;
    }
    if (*slot == kNone) {
        *slot = static_cast<std::uint32_t>(buckets_.size());
        buckets_.emplace_back();
        used_keys_.push_back(key);
    }
    return buckets_[*slot];
}

void HashTable::clear() {
    if (direct_) {
        for (HashKey key : used_keys_) direct_index_[key] = kNone;
    } else {
        sparse_index_.clear();
    }
    used_keys_.clear();
    buckets_.clear();
}

// LshTables ----------------------------------------------------------------

void validate(const TableConfig& c) {
    if (c.bucket_capacity == 0) throw ConfigError("tables: bucket capacity must be >= 1");
    if (c.n0 == 0) throw ConfigError("tables: N0 must be >= 1");
    if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw ConfigError("tables: lambda must be finite and >= 0");
}

LshTables::LshTables(const HashFamilyConfig& hash_config, const TableConfig& table_config)
    : family_(make_hash_family(hash_config)),
      config_(table_config),
      schedule_((validate(table_config), table_config.n0), table_config.lambda) {
    const unsigned key_bits = family_->k() * family_->bits_per_code();
    const std::uint32_t l = family_->num_tables();
    tables_.reserve(l);
    table_rngs_.reserve(l);
    for (std::uint32_t t = 0; t < l; ++t) {
        tables_.emplace_back(key_bits);
        table_rngs_.emplace_back(mix_seed(config_.seed, t));
    }
}

const SimHash* LshTables::simhash() const noexcept {
    if (!config_.incremental_simhash) return nullptr;
    return dynamic_cast<const SimHash*>(family_.get());
}

void LshTables::build(WeightRows weights, int threads) {
    if (weights.cols != family_->dim()) throw DimensionMismatch(family_->dim(), weights.cols);
    num_neurons_ = weights.rows;
    const std::uint32_t l = num_tables();
    codes_.assign(std::size_t{num_neurons_} * l, 0);
    dirty_.assign(num_neurons_, 1);
    if (const SimHash* sh = simhash()) {
        projection_cache_.assign(std::size_t{num_neurons_} * sh->num_functions(), 0);
        hashed_weights_.assign(weights.data.begin(), weights.data.begin() + std::size_t{num_neurons_} * weights.cols);
    } else {
        projection_cache_.clear();
        hashed_weights_.clear();
    }
    rehash(weights, /*only_dirty=*/false, threads);
    clear();
    insert_all(threads);
}

void LshTables::rehash(WeightRows weights, bool only_dirty, int threads) {
    const SimHash* sh = simhash();
    const std::uint32_t l = num_tables();
    const std::int64_t n = num_neurons_;
#pragma omp parallel for num_threads(threads) if (threads > 1) schedule(dynamic, 64)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto id = static_cast<NeuronId>(i);
        if (only_dirty && !dirty_[id]) continue;
        const auto row = weights.row(id);
        if (sh != nullptr) {
            if (only_dirty) {
                refresh_simhash(id, row);
            } else {
                auto cache = std::span(projection_cache_).subspan(std::size_t{id} * sh->num_functions(),
                                                                  sh->num_functions());
                sh->project(row, cache);
                sh->codes_from_projections(cache, std::span(codes_).subspan(std::size_t{id} * l, l));
            }
        } else {
            family_->hash_into(row, std::span(codes_).subspan(std::size_t{id} * l, l));
        }
        dirty_[id] = 0;
    }
}

void LshTables::apply_change(NeuronId id, std::span<SimHash::Accumulator> cache, std::uint32_t index,
                             Real new_value) {
    const SimHash& sh = static_cast<const SimHash&>(*family_);
    Real& hashed = hashed_weights_[std::size_t{id} * sh.dim() + index];
    const SimHash::Accumulator change = SimHash::quantize(new_value) - SimHash::quantize(hashed);
    hashed = new_value;
    if (change == 0) return;
    const auto at = sh.projections_at(index);
    for (std::size_t e = 0; e < at.ids.size(); ++e) cache[at.ids[e]] += at.signs[e] * change;
}

void LshTables::refresh_simhash(NeuronId id, std::span<const Real> row) {
    const std::uint32_t n = family_->num_functions();
    auto cache = std::span(projection_cache_).subspan(std::size_t{id} * n, n);
    const Real* hashed = hashed_weights_.data() + std::size_t{id} * row.size();
    for (std::uint32_t c = 0; c < row.size(); ++c) {
        if (row[c] != hashed[c]) apply_change(id, cache, c, row[c]);
    }
    const std::uint32_t l = num_tables();
    static_cast<const SimHash&>(*family_).codes_from_projections(
        cache, std::span(codes_).subspan(std::size_t{id} * l, l));
}

HashCodes LshTables::incremental_simhash_update(NeuronId id,
                                                std::span<const std::pair<std::uint32_t, Real>> changed_dims) {
    const SimHash* sh = dynamic_cast<const SimHash*>(family_.get());
    if (sh == nullptr || projection_cache_.empty() || id >= num_neurons_) {
        throw std::logic_error("no cached SimHash projections for neuron " + std::to_string(id));
    }
    for (const auto& change : changed_dims) {
        if (change.first >= sh->dim()) {
            throw std::out_of_range("changed dimension " + std::to_string(change.first) + " out of range");
        }
    }
    const std::uint32_t n = sh->num_functions();
    auto cache = std::span(projection_cache_).subspan(std::size_t{id} * n, n);
    const Real* hashed = hashed_weights_.data() + std::size_t{id} * sh->dim();
    for (const auto& [index, delta] : changed_dims) apply_change(id, cache, index, hashed[index] + delta);
    const std::uint32_t l = num_tables();
    auto codes = std::span(codes_).subspan(std::size_t{id} * l, l);
    sh->codes_from_projections(cache, codes);
    return {codes.begin(), codes.end()};
}

std::span<const SimHash::Accumulator> LshTables::cached_projections(NeuronId id) const {
    if (projection_cache_.empty() || id >= num_neurons_) {
        throw std::logic_error("no cached SimHash projections for neuron " + std::to_string(id));
    }
    const std::uint32_t n = family_->num_functions();
    return std::span(projection_cache_).subspan(std::size_t{id} * n, n);
}

std::span<const HashKey> LshTables::codes_of(NeuronId id) const {
    if (id >= num_neurons_) throw std::out_of_range("neuron id " + std::to_string(id) + " was never hashed");
    const std::uint32_t l = num_tables();
    return std::span(codes_).subspan(std::size_t{id} * l, l);
}

void LshTables::insert(NeuronId id, std::span<const HashKey> codes) {
    const std::uint32_t l = num_tables();
    for (std::uint32_t t = 0; t < l; ++t) {
        Bucket& b = tables_[t].get_or_create(codes[t]);
        if (config_.policy == BucketPolicy::Fifo) {
            b.insert_fifo(id, config_.bucket_capacity);
        } else {
            b.insert_reservoir(id, config_.bucket_capacity, table_rngs_[t]);
        }
    }
}

void LshTables::insert_all(int threads) {
    const std::int64_t l = num_tables();
#pragma omp parallel for num_threads(threads) if (threads > 1) schedule(static, 1)
    for (std::int64_t t = 0; t < l; ++t) {
        HashTable& table = tables_[t];
        Rng& rng = table_rngs_[t];
        for (NeuronId id = 0; id < num_neurons_; ++id) {
            Bucket& b = table.get_or_create(codes_[std::size_t{id} * l + t]);
            if (config_.policy == BucketPolicy::Fifo) {
                b.insert_fifo(id, config_.bucket_capacity);
            } else {
                b.insert_reservoir(id, config_.bucket_capacity, rng);
            }
        }
    }
}

void LshTables::clear() {
    for (HashTable& t : tables_) t.clear();
}

RawCandidates LshTables::query(SparseView input) const {
    RawCandidates out;
    query(input, out);
    return out;
}

void LshTables::query(SparseView input, RawCandidates& out) const {
    thread_local std::vector<HashKey> keys;
    keys.resize(num_tables());
    family_->hash_into(input, keys);
    query_codes(keys, out);
}

void LshTables::query_codes(std::span<const HashKey> codes, RawCandidates& out) const {
    const std::uint32_t l = num_tables();
    out.resize(l);
    for (std::uint32_t t = 0; t < l; ++t) {
        const Bucket* b = tables_[t].find(codes[t]);
        out[t] = b != nullptr ? b->contents() : std::span<const NeuronId>{};
    }
}

bool LshTables::maybe_rebuild(std::uint64_t iteration, WeightRows weights, int threads) {
    if (!schedule_.due(iteration)) return false;
    rebuild(weights, threads);
    return true;
}

void LshTables::rebuild(WeightRows weights, int threads) {
    if (weights.cols != family_->dim()) throw DimensionMismatch(family_->dim(), weights.cols);
    if (weights.rows != num_neurons_) {
        build(weights, threads);
    } else {
        rehash(weights, /*only_dirty=*/true, threads);
        clear();
        insert_all(threads);
    }
    schedule_.advance();
}

void LshTables::mark_dirty(NeuronId id) noexcept {
    if (id < dirty_.size()) dirty_[id] = 1;
}

void LshTables::mark_all_dirty() noexcept { std::fill(dirty_.begin(), dirty_.end(), std::uint8_t{1}); }

}  // namespace slide
