#pragma once

#include <cstddef>
#include <span>

#include "ksae/dense_matrix.hpp"
#include "ksae/topk.hpp"

namespace ksae {

// Standard product; dispatches to kernels::parallel::gemm.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a^T * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
// a * x
Vector matvec(const DenseMatrix& a, std::span<const double> x);
// a^T * x
Vector matvec_t(const DenseMatrix& a, std::span<const double> x);

// Selected columns of m in ascending index order.
DenseMatrix restrict_columns(const DenseMatrix& m, const SupportSet& s);

struct LeastSquaresResult {
    Vector solution;
    // Set when R had a pivot below 1e-10 * max|pivot| and the ridge system was solved instead.
    bool regularized = false;
};

inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kRidge = 1e-10;

// argmin_z ||y - a z||_2 via Householder QR. Requires a.rows() >= a.cols().
LeastSquaresResult least_squares(const DenseMatrix& a, std::span<const double> y);

struct EigenDecomposition {
    Vector eigenvalues;       // descending
    DenseMatrix eigenvectors;  // column i pairs with eigenvalues[i]
    std::size_t sweeps = 0;
};

// Cyclic Jacobi for symmetric matrices. Stops when the off-diagonal Frobenius
// norm falls below 1e-12 * max(1, ||c||_F) or after 100 sweeps.
EigenDecomposition sym_eig(const DenseMatrix& c);

}  // namespace ksae
