#include "ksae/sparse_code.hpp"

#include <stdexcept>

namespace ksae {

SparseCode::SparseCode(std::size_t dim, std::vector<std::size_t> indices, std::vector<double> values)
    : dim_(dim), indices_(std::move(indices)), values_(std::move(values)) {
    if (indices_.size() != values_.size()) throw std::invalid_argument("SparseCode: index/value length mismatch");
    // Reuse SupportSet's validation.
    (void)SupportSet(indices_, dim_);
}

SparseCode SparseCode::gather(std::span<const double> dense, const SupportSet& support) {
    SparseCode code(dense.size());
    code.indices_ = support.indices();
    code.values_.reserve(support.k());
    for (std::size_t i : support) {
        if (i >= dense.size()) throw std::out_of_range("SparseCode::gather: support index out of range");
        code.values_.push_back(dense[i]);
    }
    return code;
}

Vector SparseCode::densify() const {
    Vector out(dim_, 0.0);
    for (std::size_t e = 0; e < indices_.size(); ++e) out[indices_[e]] = values_[e];
    return out;
}

DenseMatrix densify_rows(std::span<const SparseCode> codes) {
    const std::size_t dim = codes.empty() ? 0 : codes.front().dim();
    DenseMatrix out(codes.size(), dim);
    for (std::size_t s = 0; s < codes.size(); ++s) {
        if (codes[s].dim() != dim) throw std::invalid_argument("densify_rows: codes differ in dimension");
        auto row = out.row(s);
        const auto idx = codes[s].indices();
        const auto val = codes[s].values();
        for (std::size_t e = 0; e < idx.size(); ++e) row[idx[e]] = val[e];
    }
    return out;
}

}  // namespace ksae
