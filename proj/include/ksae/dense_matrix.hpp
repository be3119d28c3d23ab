#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ksae {

using Vector = std::vector<double>;

// Row-major 2-D array of doubles. Data batches store one sample per row;
// dictionaries store one atom per column.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);
    static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    // Single-column matrix holding v.
    static DenseMatrix column_vector(std::span<const double> v);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    Vector column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    DenseMatrix transpose() const;
    bool all_finite() const noexcept;

    // Rows [first, first + count) as a new matrix.
    DenseMatrix slice_rows(std::size_t first, std::size_t count) const;
    DenseMatrix gather_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_string(const DenseMatrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double frobenius_norm(const DenseMatrix& m);

}  // namespace ksae
