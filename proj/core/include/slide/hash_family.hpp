#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "slide/sparse_vector.hpp"
#include "slide/types.hpp"

namespace slide {

enum class HashFamilyKind { SimHash, Wta, Dwta, Doph };

std::string_view to_string(HashFamilyKind kind) noexcept;
// Accepts "simhash", "wta", "dwta", "doph" (case-insensitive).
HashFamilyKind parse_hash_family(std::string_view name);

struct HashFamilyConfig {
    HashFamilyKind family = HashFamilyKind::SimHash;
    std::uint32_t k_per_table = 6;
    std::uint32_t num_tables = 25;
    std::uint32_t dim = 0;
    double simhash_sparsity = 1.0 / 3.0;
    // Elements per WTA/DWTA permutation bin.
    std::uint32_t wta_bin_size = 8;
    // DOPH binarization keeps the top-k values. No default is implied by the
    // method itself; 32 works for ~128-wide hidden layers.
    std::uint32_t doph_top_k = 32;
    std::uint64_t seed = 0;
};

// Throws ConfigError describing the first violated constraint.
void validate(const HashFamilyConfig& config);

// One bucket key per table.
using HashCodes = std::vector<HashKey>;

// Sub-code value assigned to a bin that densification could not fill.
inline constexpr std::uint32_t kDensifyAttempts = 100;

// K x L locality-sensitive hash functions of one family. Immutable after
// construction and safe for concurrent use.
class HashFamily {
public:
    virtual ~HashFamily() = default;

    const HashFamilyConfig& config() const noexcept { return config_; }
    HashFamilyKind kind() const noexcept { return config_.family; }
    std::uint32_t dim() const noexcept { return config_.dim; }
    std::uint32_t k() const noexcept { return config_.k_per_table; }
    std::uint32_t num_tables() const noexcept { return config_.num_tables; }
    std::uint32_t num_functions() const noexcept { return config_.k_per_table * config_.num_tables; }
    // Width of one sub-code inside a packed key.
    unsigned bits_per_code() const noexcept { return bits_per_code_; }
    std::uint32_t sentinel_code() const noexcept;

    HashCodes hash(SparseView v) const;
    HashCodes hash(std::span<const Real> dense) const;
    void hash_into(SparseView v, std::span<HashKey> out) const;
    void hash_into(std::span<const Real> dense, std::span<HashKey> out) const;

    // The K*L unpacked sub-codes, table-major (table t owns [t*K, (t+1)*K)).
    virtual void sub_codes(SparseView v, std::span<std::uint32_t> out) const = 0;
    virtual void sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const = 0;

    // Concatenates K sub-codes into one key, sub-code j at bit offset j*bits.
    HashKey pack(std::span<const std::uint32_t> codes) const noexcept;
    void pack_all(std::span<const std::uint32_t> codes, std::span<HashKey> out) const noexcept;

protected:
    HashFamily(const HashFamilyConfig& config, unsigned bits_per_code);
    void check_dim(std::uint32_t dim) const;

private:
    HashFamilyConfig config_;
    unsigned bits_per_code_;
};

std::unique_ptr<HashFamily> make_hash_family(const HashFamilyConfig& config);

// Signed random projections with {+1, 0, -1} entries stored sparsely as
// (index, sign) pairs. A bit is 1 iff the projection is strictly positive.
// Projections are summed exactly in fixed point with kFractionBits fractional
// bits, so every summation order (including incremental updates) yields the
// same value.
class SimHash final : public HashFamily {
public:
    using Accumulator = std::int64_t;
    static constexpr int kFractionBits = 24;
    // Inputs are clamped to this magnitude before quantization.
    static constexpr Real kMaxMagnitude = 4194304.0;  // 2^22

    explicit SimHash(const HashFamilyConfig& config);

    static Accumulator quantize(Real x) noexcept;

    struct Entries {
        std::span<const std::uint32_t> ids;  // dimension index or projection id
        std::span<const std::int8_t> signs;
    };

    std::uint32_t nonzeros_per_projection() const noexcept { return per_projection_; }
    // Sorted dimension indices and signs of projection r.
    Entries projection(std::uint32_t r) const noexcept;
    // Projections (by id) that store a nonzero entry at dimension i.
    Entries projections_at(std::uint32_t i) const noexcept;

    // Fixed-point dot products with every projection.
    void project(SparseView v, std::span<Accumulator> out) const;
    void project(std::span<const Real> dense, std::span<Accumulator> out) const;
    void codes_from_projections(std::span<const Accumulator> dots, std::span<HashKey> out) const noexcept;

    using HashFamily::sub_codes;
    void sub_codes(SparseView v, std::span<std::uint32_t> out) const override;
    void sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const override;

private:
    std::uint32_t per_projection_;
    std::vector<std::uint32_t> proj_index_;  // KL * per_projection_
    std::vector<std::int8_t> proj_sign_;
    std::vector<std::uint32_t> dim_offsets_;  // dim + 1
    std::vector<std::uint32_t> dim_proj_;
    std::vector<std::int8_t> dim_sign_;
};

// Winner-take-all over bins of m permuted coordinates. Only ceil(KLm/d)
// permutations are drawn; each yields d/m bins.
class WtaHash : public HashFamily {
public:
    explicit WtaHash(const HashFamilyConfig& config);

    std::uint32_t bin_size() const noexcept { return bin_size_; }
    std::uint32_t num_permutations() const noexcept { return num_permutations_; }
    // Original coordinates of bin b in permuted order.
    std::span<const std::uint32_t> bin_members(std::uint32_t b) const noexcept;

    using HashFamily::sub_codes;
    void sub_codes(SparseView v, std::span<std::uint32_t> out) const override;
    void sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const override;

protected:
    // (bin, local position) pairs that coordinate i feeds.
    struct Slot {
        std::uint32_t bin;
        std::uint32_t local;
    };
    std::span<const Slot> slots_at(std::uint32_t i) const noexcept;

private:
    std::uint32_t bin_size_;
    std::uint32_t num_permutations_;
    std::vector<std::uint32_t> members_;  // KL * m
    std::vector<std::uint32_t> dim_offsets_;
    std::vector<Slot> dim_slots_;
};

// WTA restricted to the nonzero coordinates of the input; bins that receive no
// nonzero are filled by densification.
class DwtaHash final : public WtaHash {
public:
    explicit DwtaHash(const HashFamilyConfig& config);

    using HashFamily::sub_codes;
    void sub_codes(SparseView v, std::span<std::uint32_t> out) const override;
    void sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const override;
};

// Densified one-permutation minwise hashing over the top-k coordinates.
class DophHash final : public HashFamily {
public:
    explicit DophHash(const HashFamilyConfig& config);

    std::uint32_t bin_width() const noexcept { return bin_width_; }
    // Position of coordinate i under the permutation.
    std::span<const std::uint32_t> positions() const noexcept { return position_; }
    // Indices of the top-k nonzero values (ties keep the lower index), sorted.
    std::vector<std::uint32_t> binarize(SparseView v) const;
    std::vector<std::uint32_t> binarize(std::span<const Real> dense) const;

    using HashFamily::sub_codes;
    void sub_codes(SparseView v, std::span<std::uint32_t> out) const override;
    void sub_codes(std::span<const Real> dense, std::span<std::uint32_t> out) const override;

private:
    void minhash(std::span<const std::uint32_t> set, std::span<std::uint32_t> out) const;

    std::uint32_t bin_width_;
    std::vector<std::uint32_t> position_;
};

// Fills every bin whose `occupied` flag is false by probing donor bins
// (universal hash of (bin, attempt)) for up to kDensifyAttempts tries; bins
// still empty receive `sentinel`. Donors are only taken from bins that were
// occupied before densification.
void densify(std::span<std::uint32_t> codes, std::span<const std::uint8_t> occupied,
             std::uint32_t sentinel) noexcept;

// Universal hash used to pick densification donors.
std::uint64_t densify_probe(std::uint64_t bin, std::uint64_t attempt) noexcept;

unsigned ceil_log2(std::uint64_t x) noexcept;

}  // namespace slide
