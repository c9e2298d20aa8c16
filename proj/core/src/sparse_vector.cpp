#include "slide/sparse_vector.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace slide {

SparseVector SparseVector::from_pairs(std::uint32_t dim,
                                      std::vector<std::pair<std::uint32_t, Real>> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    SparseVector out(dim);
    out.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto [index, value] = entries[i];
        if (index >= dim) {
            throw std::invalid_argument("sparse index " + std::to_string(index) +
                                        " out of range for dim " + std::to_string(dim));
        }
        if (i > 0 && entries[i - 1].first == index) {
            throw std::invalid_argument("repeated sparse index " + std::to_string(index));
        }
        if (value != Real{0}) out.push_back(index, value);
    }
    return out;
}

SparseVector SparseVector::from_dense(std::span<const Real> dense) {
    SparseVector out(static_cast<std::uint32_t>(dense.size()));
    for (std::uint32_t i = 0; i < dense.size(); ++i) {
        if (dense[i] != Real{0}) out.push_back(i, dense[i]);
    }
    return out;
}

void SparseVector::push_back(std::uint32_t index, Real value) {
    indices_.push_back(index);
    values_.push_back(value);
}

void SparseVector::clear() noexcept {
    indices_.clear();
    values_.clear();
}

void SparseVector::reserve(std::size_t n) {
    indices_.reserve(n);
    values_.reserve(n);
}

std::vector<Real> SparseVector::to_dense() const {
    std::vector<Real> dense(dim_, Real{0});
    for (std::size_t i = 0; i < indices_.size(); ++i) dense[indices_[i]] = values_[i];
    return dense;
}

Real SparseVector::squared_norm() const noexcept {
    Real acc = 0;
    for (Real v : values_) acc += v * v;
    return acc;
}

void SparseVector::scale(Real factor) noexcept {
    for (Real& v : values_) v *= factor;
}

bool SparseVector::valid() const noexcept {
    if (indices_.size() != values_.size()) return false;
    for (std::size_t i = 0; i < indices_.size(); ++i) {
        if (indices_[i] >= dim_ || values_[i] == Real{0}) return false;
        if (i > 0 && indices_[i] <= indices_[i - 1]) return false;
    }
    return true;
}

Real dot(SparseView sparse, std::span<const Real> dense) {
    Real acc = 0;
    for (std::size_t i = 0; i < sparse.nnz(); ++i) acc += sparse.values[i] * dense[sparse.indices[i]];
    return acc;
}

}  // namespace slide
