#include <cstdlib>
#include <stdexcept>
#include <string>

#include <omp.h>

#include "ksae/kernels.hpp"

namespace ksae::kernels {

namespace {
int default_threads = 0;
}

void set_thread_count(int n) {
    if (default_threads == 0) default_threads = omp_get_max_threads();
    omp_set_num_threads(n > 0 ? n : default_threads);
}

int thread_count() { return omp_get_max_threads(); }

int configure_threads_from_env() {
    if (const char* env = std::getenv("KSAE_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n > 0) set_thread_count(static_cast<int>(n));
    }
    return thread_count();
}

namespace parallel {

// Rows of C are split across threads; the i-k-j order accumulates every
// c(i, j) over k ascending, matching serial::gemm. Zero entries of A are
// skipped: adding +-0 never changes a partial sum that starts at +0.
DenseMatrix gemm(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("gemm: inner dimensions differ (" + shape_string(a) + " * " + shape_string(b) + ")");
    DenseMatrix c(a.rows(), b.cols());
    const auto rows = static_cast<std::ptrdiff_t>(a.rows());
    const std::size_t inner = a.cols();
    const std::size_t n = b.cols();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* crow = c.values().data() + static_cast<std::size_t>(i) * n;
        const double* arow = a.storage().data() + static_cast<std::size_t>(i) * inner;
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.storage().data() + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

DenseMatrix gemm_tn(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows())
        throw std::invalid_argument("gemm_tn: row counts differ (" + shape_string(a) + " vs " + shape_string(b) + ")");
    DenseMatrix c(a.cols(), b.cols());
    const auto out_rows = static_cast<std::ptrdiff_t>(a.cols());
    const std::size_t n = b.cols();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t p = 0; p < out_rows; ++p) {
        double* crow = c.values().data() + static_cast<std::size_t>(p) * n;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            const double arp = a(r, static_cast<std::size_t>(p));
            if (arp == 0.0) continue;
            const double* brow = b.storage().data() + r * n;
            for (std::size_t q = 0; q < n; ++q) crow[q] += arp * brow[q];
        }
    }
    return c;
}

void add_sparse_outer(DenseMatrix& out, const DenseMatrix& left, std::span<const SparseCode> codes, double scale) {
    if (left.rows() != codes.size() || left.cols() != out.rows())
        throw std::invalid_argument("add_sparse_outer: shape mismatch");
    for (const auto& code : codes)
        for (std::size_t j : code.indices())
            if (j >= out.cols()) throw std::out_of_range("add_sparse_outer: code index out of range");
    const auto rows = static_cast<std::ptrdiff_t>(out.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* orow = out.values().data() + i * out.cols();
        for (std::size_t s = 0; s < codes.size(); ++s) {
            const double l = left(s, i);
            const auto idx = codes[s].indices();
            const auto val = codes[s].values();
            for (std::size_t e = 0; e < idx.size(); ++e) orow[idx[e]] += scale * (l * val[e]);
        }
    }
}

void momentum_update(std::span<double> param, std::span<double> velocity, std::span<const double> grad,
                     double momentum, double eta, bool use_old_velocity) {
    if (param.size() != velocity.size() || param.size() != grad.size())
        throw std::invalid_argument("momentum_update: length mismatch");
    const auto n = static_cast<std::ptrdiff_t>(param.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double old_v = velocity[i];
        velocity[i] = momentum * old_v - eta * grad[i];
        param[i] += use_old_velocity ? old_v : velocity[i];
    }
}

}  // namespace parallel

}  // namespace ksae::kernels
