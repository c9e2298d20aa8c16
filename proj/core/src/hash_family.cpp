#include "slide/hash_family.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>

namespace slide {

namespace {

std::vector<std::uint32_t> iota_vector(std::uint32_t n) {
    std::vector<std::uint32_t> v(n);
    std::iota(v.begin(), v.end(), 0u);
    return v;
}

std::uint32_t wta_bins_per_permutation(const HashFamilyConfig& c) { return c.dim / c.wta_bin_size; }

std::uint32_t doph_bin_width(const HashFamilyConfig& c) {
    const std::uint64_t bins = std::uint64_t{c.k_per_table} * c.num_tables;
    return static_cast<std::uint32_t>((c.dim + bins - 1) / bins);
}

unsigned bits_for(const HashFamilyConfig& c) {
    switch (c.family) {
        case HashFamilyKind::SimHash: return 1;
        case HashFamilyKind::Wta:
        case HashFamilyKind::Dwta: return ceil_log2(c.wta_bin_size);
        case HashFamilyKind::Doph: return ceil_log2(doph_bin_width(c));
    }
    return 0;
}

std::span<std::uint32_t> scratch_codes(std::size_t n) {
    thread_local std::vector<std::uint32_t> buf;
    if (buf.size() < n) buf.resize(n);
    return {buf.data(), n};
}

std::span<std::uint8_t> scratch_flags(std::size_t n) {
    thread_local std::vector<std::uint8_t> buf;
    buf.assign(std::max(n, buf.size()), 0);
    return {buf.data(), n};
}

}  // namespace

unsigned ceil_log2(std::uint64_t x) noexcept {
    return x <= 1 ? 0u : static_cast<unsigned>(std::bit_width(x - 1));
}

std::string_view to_string(HashFamilyKind kind) noexcept {
    switch (kind) {
        case HashFamilyKind::SimHash: return "simhash";
        case HashFamilyKind::Wta: return "wta";
        case HashFamilyKind::Dwta: return "dwta";
        case HashFamilyKind::Doph: return "doph";
    }
    return "unknown";
}

HashFamilyKind parse_hash_family(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "simhash") return HashFamilyKind::SimHash;
    if (lower == "wta") return HashFamilyKind::Wta;
    if (lower == "dwta") return HashFamilyKind::Dwta;
    if (lower == "doph" || lower == "minhash") return HashFamilyKind::Doph;
    throw ConfigError("unknown hash family '" + std::string(name) + "'");
}

void validate(const HashFamilyConfig& c) {
    if (c.k_per_table == 0) throw ConfigError("hash family: K must be >= 1");
    if (c.num_tables == 0) throw ConfigError("hash family: L must be >= 1");
    if (c.dim == 0) throw ConfigError("hash family: dim must be >= 1");
    switch (c.family) {
        case HashFamilyKind::SimHash:
            if (!(c.simhash_sparsity > 0.0 && c.simhash_sparsity <= 1.0)) {
                throw ConfigError("simhash: sparsity must lie in (0, 1]");
            }
            break;
        case HashFamilyKind::Wta:
        case HashFamilyKind::Dwta:
            if (c.wta_bin_size == 0) throw ConfigError("wta: bin size must be >= 1");
            if (c.wta_bin_size > c.dim) throw ConfigError("wta: bin size exceeds dim");
            break;
        case HashFamilyKind::Doph:
            if (c.doph_top_k == 0) throw ConfigError("doph: top-k must be >= 1");
            break;
    }
    if (std::uint64_t{c.k_per_table} * bits_for(c) > 64) {
        throw ConfigError("hash family: K sub-codes of " + std::to_string(bits_for(c)) +
                          " bits do not fit a 64-bit key");
    }
}

// HashFamily ---------------------------------------------------------------

HashFamily::HashFamily(const HashFamilyConfig& config, unsigned bits_per_code)
    : config_(config), bits_per_code_(bits_per_code) {}

std::uint32_t HashFamily::sentinel_code() const noexcept {
    return bits_per_code_ == 0 ? 0u : static_cast<std::uint32_t>((std::uint64_t{1} << bits_per_code_) - 1);
}

void HashFamily::check_dim(std::uint32_t dim) const {
    if (dim != config_.dim) throw DimensionMismatch(config_.dim, dim);
}

HashKey HashFamily::pack(std::span<const std::uint32_t> codes) const noexcept {
    if (bits_per_code_ == 0) return 0;
    HashKey key = 0;
    for (std::size_t j = 0; j < codes.size(); ++j) key |= HashKey{codes[j]} << (j * bits_per_code_);
    return key;
}

void HashFamily::pack_all(std::span<const std::uint32_t> codes, std::span<HashKey> out) const noexcept {
    const std::uint32_t k = config_.k_per_table;
    for (std::uint32_t t = 0; t < config_.num_tables; ++t) out[t] = pack(codes.subspan(t * k, k));
}

HashCodes HashFamily::hash(SparseView v) const {
    HashCodes out(config_.num_tables);
    hash_into(v, out);
    return out;
}

HashCodes HashFamily::hash(std::span<const Real> dense) const {
    HashCodes out(config_.num_tables);
    hash_into(dense, out);
    return out;
}

void HashFamily::hash_into(SparseView v, std::span<HashKey> out) const {
    auto codes = scratch_codes(num_functions());
    sub_codes(v, codes);
    pack_all(codes, out);
}

void HashFamily::hash_into(std::span<const Real> dense, std::span<HashKey> out) const {
    auto codes = scratch_codes(num_functions());
    sub_codes(dense, codes);
    pack_all(codes, out);
}

std::unique_ptr<HashFamily> make_hash_family(const HashFamilyConfig& config) {
    validate(config);
    switch (config.family) {
        case HashFamilyKind::SimHash: return std::make_unique<SimHash>(config);
        case HashFamilyKind::Wta: return std::make_unique<WtaHash>(config);
        case HashFamilyKind::Dwta: return std::make_unique<DwtaHash>(config);
        case HashFamilyKind::Doph: return std::make_unique<DophHash>(config);
    }
    throw ConfigError("unknown hash family");
}

// Densification ------------------------------------------------------------

std::uint64_t densify_probe(std::uint64_t bin, std::uint64_t attempt) noexcept {
    const std::uint64_t x = 1009ULL * bin + 1000000003ULL * attempt;
    return (48271ULL * x + 11ULL) % ((1ULL << 31) - 1);
}

void densify(std::span<std::uint32_t> codes, std::span<const std::uint8_t> occupied,
             std::uint32_t sentinel) noexcept {
    const std::size_t n = codes.size();
    for (std::size_t bin = 0; bin < n; ++bin) {
        if (occupied[bin]) continue;
        codes[bin] = sentinel;
        for (std::uint32_t attempt = 0; attempt < kDensifyAttempts; ++attempt) {
            const std::size_t donor = densify_probe(bin, attempt) % n;
            if (occupied[donor]) {
                codes[bin] = codes[donor];
                break;
            }
        }
    }
}

// SimHash ------------------------------------------------------------------

SimHash::SimHash(const HashFamilyConfig& config) : HashFamily(config, 1) {
    validate(config);
    const std::uint32_t d = config.dim;
    const std::uint32_t n = num_functions();
    per_projection_ = static_cast<std::uint32_t>(
        std::clamp<long>(std::lround(d * config.simhash_sparsity), 1L, static_cast<long>(d)));

    Rng rng(config.seed);
    std::vector<std::uint32_t> pool = iota_vector(d);
    std::uniform_int_distribution<int> coin(0, 1);
    proj_index_.resize(std::size_t{n} * per_projection_);
    proj_sign_.resize(proj_index_.size());
    for (std::uint32_t r = 0; r < n; ++r) {
        // Partial Fisher-Yates: the first per_projection_ entries of pool are
        // a uniform subset regardless of the pool's current order.
        for (std::uint32_t j = 0; j < per_projection_; ++j) {
            std::uniform_int_distribution<std::uint32_t> pick(j, d - 1);
            std::swap(pool[j], pool[pick(rng)]);
        }
        auto idx = std::span(proj_index_).subspan(std::size_t{r} * per_projection_, per_projection_);
        std::copy_n(pool.begin(), per_projection_, idx.begin());
        std::sort(idx.begin(), idx.end());
        for (std::uint32_t j = 0; j < per_projection_; ++j) {
            proj_sign_[std::size_t{r} * per_projection_ + j] = coin(rng) ? 1 : -1;
        }
    }

    dim_offsets_.assign(std::size_t{d} + 1, 0);
    for (std::uint32_t i : proj_index_) ++dim_offsets_[i + 1];
    std::partial_sum(dim_offsets_.begin(), dim_offsets_.end(), dim_offsets_.begin());
    dim_proj_.resize(proj_index_.size());
    dim_sign_.resize(proj_index_.size());
    std::vector<std::uint32_t> fill(dim_offsets_.begin(), dim_offsets_.end() - 1);
    for (std::uint32_t r = 0; r < n; ++r) {
        for (std::uint32_t j = 0; j < per_projection_; ++j) {
            const std::size_t e = std::size_t{r} * per_projection_ + j;
            const std::uint32_t slot = fill[proj_index_[e]]++;
            dim_proj_[slot] = r;
            dim_sign_[slot] = proj_sign_[e];
        }
    }
}

SimHash::Entries SimHash::projection(std::uint32_t r) const noexcept {
    const std::size_t off = std::size_t{r} * per_projection_;
    return {std::span(proj_index_).subspan(off, per_projection_),
            std::span(proj_sign_).subspan(off, per_projection_)};
}

SimHash::Entries SimHash::projections_at(std::uint32_t i) const noexcept {
    const std::uint32_t b = dim_offsets_[i];
    const std::uint32_t e = dim_offsets_[i + 1];
    return {std::span(dim_proj_).subspan(b, e - b), std::span(dim_sign_).subspan(b, e - b)};
}

SimHash::Accumulator SimHash::quantize(Real x) noexcept {
    if (!(x == x)) return 0;
    const Real clamped = std::clamp(x, -kMaxMagnitude, kMaxMagnitude);
    return static_cast<Accumulator>(std::llround(std::ldexp(clamped, kFractionBits)));
}

void SimHash::project(SparseView v, std::span<Accumulator> out) const {
    check_dim(v.dim);
    std::fill(out.begin(), out.end(), Accumulator{0});
    for (std::size_t n = 0; n < v.nnz(); ++n) {
        const Accumulator value = quantize(v.values[n]);
        const auto at = projections_at(v.indices[n]);
        for (std::size_t e = 0; e < at.ids.size(); ++e) out[at.ids[e]] += at.signs[e] * value;
    }
}

void SimHash::project(std::span<const Real> dense, std::span<Accumulator> out) const {
    check_dim(static_cast<std::uint32_t>(dense.size()));
    thread_local std::vector<Accumulator> fixed;
    fixed.resize(dense.size());
    std::transform(dense.begin(), dense.end(), fixed.begin(), quantize);
    const std::uint32_t n = num_functions();
    for (std::uint32_t r = 0; r < n; ++r) {
        const auto p = projection(r);
        Accumulator acc = 0;
        for (std::size_t e = 0; e < p.ids.size(); ++e) acc += p.signs[e] * fixed[p.ids[e]];
        out[r] = acc;
    }
}

void SimHash::codes_from_projections(std::span<const Accumulator> dots, std::span<HashKey> out) const noexcept {
    const std::uint32_t k = this->k();
    for (std::uint32_t t = 0; t < num_tables(); ++t) {
        HashKey key = 0;
        for (std::uint32_t j = 0; j < k; ++j) {
            if (dots[t * k + j] > 0) key |= HashKey{1} << j;
        }
        out[t] = key;
    }
}

void SimHash::sub_codes(SparseView v, std::span<std::uint32_t> out) const {
    thread_local std::vector<Accumulator> dots;
    dots.resize(num_functions());
    project(v, dots);
    for (std::size_t r = 0; r < dots.size(); ++r) out[r] = dots[r] > 0 ? 1u : 0u;
}

void SimHash::sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const {
    thread_local std::vector<Accumulator> dots;
    dots.resize(num_functions());
    project(dense, dots);
    for (std::size_t r = 0; r < dots.size(); ++r) out[r] = dots[r] > 0 ? 1u : 0u;
}

// WTA ----------------------------------------------------------------------

WtaHash::WtaHash(const HashFamilyConfig& config) : HashFamily(config, bits_for(config)) {
    validate(config);
    const std::uint32_t d = config.dim;
    const std::uint32_t m = config.wta_bin_size;
    const std::uint32_t bins = num_functions();
    const std::uint32_t per_perm = wta_bins_per_permutation(config);
    bin_size_ = m;
    num_permutations_ = (bins + per_perm - 1) / per_perm;

    Rng rng(config.seed);
    std::vector<std::uint32_t> perm = iota_vector(d);
    members_.resize(std::size_t{bins} * m);
    for (std::uint32_t p = 0; p < num_permutations_; ++p) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::uint32_t b = 0; b < per_perm; ++b) {
            const std::uint32_t global = p * per_perm + b;
            if (global >= bins) break;
            std::copy_n(perm.begin() + std::size_t{b} * m, m, members_.begin() + std::size_t{global} * m);
        }
    }

    dim_offsets_.assign(std::size_t{d} + 1, 0);
    for (std::uint32_t i : members_) ++dim_offsets_[i + 1];
    std::partial_sum(dim_offsets_.begin(), dim_offsets_.end(), dim_offsets_.begin());
    dim_slots_.resize(members_.size());
    std::vector<std::uint32_t> fill(dim_offsets_.begin(), dim_offsets_.end() - 1);
    for (std::uint32_t g = 0; g < bins; ++g) {
        for (std::uint32_t j = 0; j < m; ++j) {
            dim_slots_[fill[members_[std::size_t{g} * m + j]]++] = Slot{g, j};
        }
    }
}

std::span<const std::uint32_t> WtaHash::bin_members(std::uint32_t b) const noexcept {
    return std::span(members_).subspan(std::size_t{b} * bin_size_, bin_size_);
}

std::span<const WtaHash::Slot> WtaHash::slots_at(std::uint32_t i) const noexcept {
    const std::uint32_t b = dim_offsets_[i];
    return std::span(dim_slots_).subspan(b, dim_offsets_[i + 1] - b);
}

void WtaHash::sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const {
    check_dim(static_cast<std::uint32_t>(dense.size()));
    const std::uint32_t bins = num_functions();
    for (std::uint32_t g = 0; g < bins; ++g) {
        const auto members = bin_members(g);
        std::uint32_t best = 0;
        Real best_value = dense[members[0]];
        for (std::uint32_t j = 1; j < bin_size_; ++j) {
            if (dense[members[j]] > best_value) {
                best_value = dense[members[j]];
                best = j;
            }
        }
        out[g] = best;
    }
}

void WtaHash::sub_codes(SparseView v, std::span<std::uint32_t> out) const {
    check_dim(v.dim);
    thread_local std::vector<Real> dense;
    dense.assign(v.dim, Real{0});
    for (std::size_t n = 0; n < v.nnz(); ++n) dense[v.indices[n]] = v.values[n];
    WtaHash::sub_codes(std::span<const Real>(dense), out);
}

// DWTA ---------------------------------------------------------------------

DwtaHash::DwtaHash(const HashFamilyConfig& config) : WtaHash(config) {}

void DwtaHash::sub_codes(SparseView v, std::span<std::uint32_t> out) const {
    check_dim(v.dim);
    const std::uint32_t bins = num_functions();
    thread_local std::vector<Real> best;
    best.resize(bins);
    auto occupied = scratch_flags(bins);
    for (std::size_t n = 0; n < v.nnz(); ++n) {
        const Real value = v.values[n];
        for (const Slot s : slots_at(v.indices[n])) {
            if (!occupied[s.bin] || value > best[s.bin] ||
                (value == best[s.bin] && s.local < out[s.bin])) {
                occupied[s.bin] = 1;
                best[s.bin] = value;
                out[s.bin] = s.local;
            }
        }
    }
    densify(out.first(bins), occupied, sentinel_code());
}

void DwtaHash::sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const {
    check_dim(static_cast<std::uint32_t>(dense.size()));
    thread_local SparseVector nonzero;
    nonzero.clear();
    nonzero.set_dim(dim());
    for (std::uint32_t i = 0; i < dense.size(); ++i) {
        if (dense[i] != Real{0}) nonzero.push_back(i, dense[i]);
    }
    sub_codes(nonzero.view(), out);
}

// DOPH ---------------------------------------------------------------------

DophHash::DophHash(const HashFamilyConfig& config) : HashFamily(config, bits_for(config)) {
    validate(config);
    bin_width_ = doph_bin_width(config);
    Rng rng(config.seed);
    std::vector<std::uint32_t> perm = iota_vector(config.dim);
    std::shuffle(perm.begin(), perm.end(), rng);
    position_.resize(config.dim);
    for (std::uint32_t pos = 0; pos < config.dim; ++pos) position_[perm[pos]] = pos;
}

namespace {

struct Candidate {
    Real value;
    std::uint32_t index;
};

// Larger value first; equal values prefer the lower index.
bool ranks_above(const Candidate& a, const Candidate& b) noexcept {
    return a.value > b.value || (a.value == b.value && a.index < b.index);
}

template <typename Visit>
std::vector<std::uint32_t> top_k_indices(std::uint32_t k, Visit&& for_each_nonzero) {
    // Max-heap under ranks_above keeps the weakest retained candidate on top.
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(&ranks_above)> heap(&ranks_above);
    for_each_nonzero([&](std::uint32_t index, Real value) {
        const Candidate c{value, index};
        if (heap.size() < k) {
            heap.push(c);
        } else if (ranks_above(c, heap.top())) {
            heap.pop();
            heap.push(c);
        }
    });
    std::vector<std::uint32_t> out;
    out.reserve(heap.size());
    while (!heap.empty()) {
        out.push_back(heap.top().index);
        heap.pop();
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

std::vector<std::uint32_t> DophHash::binarize(SparseView v) const {
    check_dim(v.dim);
    const std::uint32_t k = config().doph_top_k;
    if (v.nnz() <= k) return {v.indices.begin(), v.indices.end()};
    return top_k_indices(k, [&](auto&& emit) {
        for (std::size_t n = 0; n < v.nnz(); ++n) emit(v.indices[n], v.values[n]);
    });
}

std::vector<std::uint32_t> DophHash::binarize(std::span<const Real> dense) const {
    check_dim(static_cast<std::uint32_t>(dense.size()));
    return top_k_indices(config().doph_top_k, [&](auto&& emit) {
        for (std::uint32_t i = 0; i < dense.size(); ++i) {
            if (dense[i] != Real{0}) emit(i, dense[i]);
        }
    });
}

void DophHash::minhash(std::span<const std::uint32_t> set, std::span<std::uint32_t> out) const {
    const std::uint32_t bins = num_functions();
    auto occupied = scratch_flags(bins);
    for (std::uint32_t i : set) {
        const std::uint32_t pos = position_[i];
        const std::uint32_t bin = pos / bin_width_;
        const std::uint32_t offset = pos % bin_width_;
        if (!occupied[bin] || offset < out[bin]) {
            occupied[bin] = 1;
            out[bin] = offset;
        }
    }
    densify(out.first(bins), occupied, sentinel_code());
}

void DophHash::sub_codes(SparseView v, std::span<std::uint32_t> out) const {
    minhash(binarize(v), out);
}

void DophHash::sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const {
    minhash(binarize(dense), out);
}

}  // namespace slide
