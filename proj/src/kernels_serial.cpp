#include <stdexcept>

#include "ksae/kernels.hpp"

namespace ksae::kernels::serial {

DenseMatrix gemm(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("gemm: inner dimensions differ (" + shape_string(a) + " * " + shape_string(b) + ")");
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

DenseMatrix gemm_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("gemm_tn: row counts differ (" + shape_string(a) + " vs " + shape_string(b) + ")");
    DenseMatrix c(a.cols(), b.cols());
    for (std::size_t p = 0; p < a.cols(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q) {
            double s = 0.0;
            for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, p) * b(r, q);
            c(p, q) = s;
        }
    return c;
}

void add_sparse_outer(DenseMatrix& out, const DenseMatrix& left, std::span<const SparseCode> codes, double scale) {
    if (left.rows() != codes.size() || left.cols() != out.rows())
        throw std::invalid_argument("add_sparse_outer: shape mismatch");
    for (std::size_t s = 0; s < codes.size(); ++s) {
        const auto idx = codes[s].indices();
        const auto val = codes[s].values();
        for (std::size_t e = 0; e < idx.size(); ++e) {
            if (idx[e] >= out.cols()) throw std::out_of_range("add_sparse_outer: code index out of range");
            for (std::size_t i = 0; i < out.rows(); ++i) out(i, idx[e]) += scale * (left(s, i) * val[e]);
        }
    }
}

void momentum_update(std::span<double> param, std::span<double> velocity, std::span<const double> grad,
                     double momentum, double eta, bool use_old_velocity) {
    if (param.size() != velocity.size() || param.size() != grad.size())
        throw std::invalid_argument("momentum_update: length mismatch");
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double old_v = velocity[i];
        velocity[i] = momentum * old_v - eta * grad[i];
        param[i] += use_old_velocity ? old_v : velocity[i];
    }
}

}  // namespace ksae::kernels::serial
