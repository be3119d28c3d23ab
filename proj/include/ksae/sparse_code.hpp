#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ksae/dense_matrix.hpp"
#include "ksae/topk.hpp"

namespace ksae {

// Sparse hidden vector as parallel (index, value) arrays, indices ascending.
class SparseCode {
public:
    SparseCode() = default;
    explicit SparseCode(std::size_t dim) : dim_(dim) {}
    // Validates indices against dim (strictly increasing, in range).
    SparseCode(std::size_t dim, std::vector<std::size_t> indices, std::vector<double> values);

    // Values of `dense` at the support.
    static SparseCode gather(std::span<const double> dense, const SupportSet& support);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t nnz() const noexcept { return indices_.size(); }
    std::span<const std::size_t> indices() const noexcept { return indices_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    SupportSet support() const { return SupportSet(indices_, dim_); }
    Vector densify() const;

    friend bool operator==(const SparseCode&, const SparseCode&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<std::size_t> indices_;
    std::vector<double> values_;
};

// Rows = codes, zeros filled in.
DenseMatrix densify_rows(std::span<const SparseCode> codes);

}  // namespace ksae
