#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "slide/types.hpp"

namespace slide {

// Non-owning view of a sparse vector. Indices are strictly increasing and
// every index is < dim.
struct SparseView {
    std::span<const std::uint32_t> indices;
    std::span<const Real> values;
    std::uint32_t dim = 0;

    std::size_t nnz() const noexcept { return indices.size(); }
};

// Index/value pairs over a space of dimension `dim`. Invariants: indices
// strictly increasing, all < dim, no stored value exactly zero.
class SparseVector {
public:
    SparseVector() = default;
    explicit SparseVector(std::uint32_t dim) : dim_(dim) {}

    // Sorts by index, drops exact zeros. Throws std::invalid_argument on a
    // repeated index or an index >= dim.
    static SparseVector from_pairs(std::uint32_t dim,
                                   std::vector<std::pair<std::uint32_t, Real>> entries);
    static SparseVector from_dense(std::span<const Real> dense);

    // Appends an entry; caller guarantees the index is above every stored one.
    void push_back(std::uint32_t index, Real value);
    void clear() noexcept;
    void reserve(std::size_t n);
    void set_dim(std::uint32_t dim) noexcept { dim_ = dim; }

    std::uint32_t dim() const noexcept { return dim_; }
    std::size_t nnz() const noexcept { return indices_.size(); }
    bool empty() const noexcept { return indices_.empty(); }
    const std::vector<std::uint32_t>& indices() const noexcept { return indices_; }
    const std::vector<Real>& values() const noexcept { return values_; }

    SparseView view() const noexcept { return {indices_, values_, dim_}; }
    operator SparseView() const noexcept { return view(); }

    std::vector<Real> to_dense() const;
    Real squared_norm() const noexcept;
    void scale(Real factor) noexcept;

    // True when the stored entries satisfy the class invariants.
    bool valid() const noexcept;

    friend bool operator==(const SparseVector&, const SparseVector&) = default;

private:
    std::vector<std::uint32_t> indices_;
    std::vector<Real> values_;
    std::uint32_t dim_ = 0;
};

Real dot(SparseView sparse, std::span<const Real> dense);

}  // namespace slide
