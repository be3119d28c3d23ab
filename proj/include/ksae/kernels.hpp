#pragma once

// Data-parallel inner loops. Each kernel exists twice:
//
//   serial::   straightforward reference loops, kept for testing
//   parallel:: OpenMP versions used by the library
//
// Every output element is produced by exactly one thread and accumulates its
// terms in the same order as the serial reference, so the two agree
// bit-for-bit (the build disables floating-point contraction).

#include <cstddef>
#include <span>

#include "ksae/dense_matrix.hpp"
#include "ksae/sparse_code.hpp"

namespace ksae::kernels {

// Caps OpenMP parallelism for the parallel kernels; 0 restores the default.
void set_thread_count(int n);
int thread_count();
// Reads KSAE_THREADS, if set, and applies it. Returns the effective count.
int configure_threads_from_env();

namespace serial {

// C = A * B
DenseMatrix gemm(const DenseMatrix& a, const DenseMatrix& b);
// C = A^T * B
DenseMatrix gemm_tn(const DenseMatrix& a, const DenseMatrix& b);
// out(i, j) += scale * sum_s left(s, i) * codes[s](j), s ascending.
void add_sparse_outer(DenseMatrix& out, const DenseMatrix& left, std::span<const SparseCode> codes, double scale);
// v = momentum * v - eta * g; p += v (or p += old v when `use_old_velocity`).
void momentum_update(std::span<double> param, std::span<double> velocity, std::span<const double> grad,
                     double momentum, double eta, bool use_old_velocity);

}  // namespace serial

namespace parallel {

DenseMatrix gemm(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix gemm_tn(const DenseMatrix& a, const DenseMatrix& b);
void add_sparse_outer(DenseMatrix& out, const DenseMatrix& left, std::span<const SparseCode> codes, double scale);
void momentum_update(std::span<double> param, std::span<double> velocity, std::span<const double> grad,
                     double momentum, double eta, bool use_old_velocity);

}  // namespace parallel

}  // namespace ksae::kernels
