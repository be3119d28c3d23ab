#include "ksae/topk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ksae {

SupportSet::SupportSet(std::vector<std::size_t> indices, std::size_t dim) : indices_(std::move(indices)) {
    for (std::size_t i = 0; i < indices_.size(); ++i) {
        if (indices_[i] >= dim)
            throw std::out_of_range("SupportSet: index " + std::to_string(indices_[i]) + " >= dimension " +
                                    std::to_string(dim));
        if (i > 0 && indices_[i] <= indices_[i - 1])
            throw std::invalid_argument("SupportSet: indices must be strictly increasing");
    }
}

SupportSet SupportSet::all(std::size_t dim) {
    std::vector<std::size_t> idx(dim);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return SupportSet(std::move(idx), dim);
}

bool SupportSet::contains(std::size_t index) const noexcept {
    return std::binary_search(indices_.begin(), indices_.end(), index);
}

namespace {

void check_k(std::span<const double> v, std::size_t k) {
    if (k < 1 || k > v.size())
        throw std::out_of_range("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(v.size()) + "]");
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument("top-k: non-finite input");
}

std::size_t count_at_least(std::span<const double> v, double t) {
    std::size_t c = 0;
    for (double x : v) c += x >= t ? 1 : 0;
    return c;
}

// True when every entry in [lo, hi) has the same value.
bool single_level(std::span<const double> v, double lo, double hi) {
    bool seen = false;
    double level = 0.0;
    for (double x : v) {
        if (x < lo || x >= hi) continue;
        if (!seen) {
            level = x;
            seen = true;
        } else if (x != level) {
            return false;
        }
    }
    return true;
}

}  // namespace

SupportSet top_k_support(std::span<const double> v, std::size_t k) {
    check_k(v, k);
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto larger = [&](std::size_t a, std::size_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), larger);
    order.resize(k);
    std::sort(order.begin(), order.end());
    return SupportSet(std::move(order), v.size());
}

SupportSet top_k_by_threshold(std::span<const double> v, std::size_t k) {
    check_k(v, k);
    // Invariant: count(v >= lo) >= k and count(v >= hi) < k.
    double lo = *std::min_element(v.begin(), v.end());
    double hi = *std::max_element(v.begin(), v.end());
    // The top level alone fills k; hi = max would break the invariant below.
    // (nextafter(max) is not usable either: it overflows at DBL_MAX.)
    if (count_at_least(v, hi) >= k) lo = hi, hi = std::numeric_limits<double>::infinity();
    while (count_at_least(v, lo) != k && !single_level(v, lo, hi)) {
        const double mid = lo / 2.0 + hi / 2.0;
        if (mid <= lo || mid >= hi) break;
        if (count_at_least(v, mid) >= k)
            lo = mid;
        else
            hi = mid;
    }
    // Everything >= hi survives (fewer than k); the remaining slots come from
    // [lo, hi), which now holds one shared level, in index order.
    std::vector<std::size_t> picked;
    picked.reserve(k);
    std::size_t need = k - count_at_least(v, hi);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] >= hi) {
            picked.push_back(i);
        } else if (v[i] >= lo && need > 0) {
            picked.push_back(i);
            --need;
        }
    }
    return SupportSet(std::move(picked), v.size());
}

}  // namespace ksae
