#include "ksae/dense_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ksae {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw std::invalid_argument("DenseMatrix: data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("DenseMatrix::from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return DenseMatrix(r, c, std::move(data));
}

DenseMatrix DenseMatrix::column_vector(std::span<const double> v) {
    return DenseMatrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Vector DenseMatrix::column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void DenseMatrix::set_column(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_) throw std::invalid_argument("DenseMatrix::set_column: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

DenseMatrix DenseMatrix::transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

bool DenseMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix DenseMatrix::slice_rows(std::size_t first, std::size_t count) const {
    if (first + count > rows_) throw std::out_of_range("DenseMatrix::slice_rows: range past end");
    auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * cols_);
    return DenseMatrix(count, cols_, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * cols_)));
}

DenseMatrix DenseMatrix::gather_rows(std::span<const std::size_t> indices) const {
    DenseMatrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw std::out_of_range("DenseMatrix::gather_rows: index out of range");
        std::copy_n(row(indices[i]).begin(), cols_, out.row(i).begin());
    }
    return out;
}

std::string shape_string(const DenseMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("max_abs_diff: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
    return max_abs_diff(a.values(), b.values());
}

double frobenius_norm(const DenseMatrix& m) { return norm2(m.values()); }

}  // namespace ksae
