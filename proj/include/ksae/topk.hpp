#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ksae {

// Strictly increasing index set; the complement is implicit.
class SupportSet {
public:
    SupportSet() = default;
    // Validates that indices are strictly increasing and below `dim`.
    SupportSet(std::vector<std::size_t> indices, std::size_t dim);

    static SupportSet all(std::size_t dim);

    std::size_t k() const noexcept { return indices_.size(); }
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    bool contains(std::size_t index) const noexcept;

    auto begin() const noexcept { return indices_.begin(); }
    auto end() const noexcept { return indices_.end(); }

    friend bool operator==(const SupportSet&, const SupportSet&) = default;

private:
    std::vector<std::size_t> indices_;
};

// Indices of the k largest entries by signed value. Ties go to the lower
// index. Result sorted ascending. Requires 1 <= k <= v.size().
SupportSet top_k_support(std::span<const double> v, std::size_t k);

// Same contract as top_k_support, computed by bisecting a threshold until
// exactly k entries survive. When the k-th and (k+1)-th largest values are
// equal, survivors at that level are taken in index order.
SupportSet top_k_by_threshold(std::span<const double> v, std::size_t k);

}  // namespace ksae
