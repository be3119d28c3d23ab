#include "ksae/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ksae/kernels.hpp"

namespace ksae {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) { return kernels::parallel::gemm(a, b); }

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) { return kernels::parallel::gemm_tn(a, b); }

Vector matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    Vector out(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) out[r] = dot(a.row(r), x);
    return out;
}

Vector matvec_t(const DenseMatrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) throw std::invalid_argument("matvec_t: dimension mismatch");
    Vector out(a.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double xr = x[r];
        const auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += row[c] * xr;
    }
    return out;
}

DenseMatrix restrict_columns(const DenseMatrix& m, const SupportSet& s) {
    DenseMatrix out(m.rows(), s.k());
    for (std::size_t j = 0; j < s.k(); ++j) {
        const std::size_t col = s.indices()[j];
        if (col >= m.cols())
            throw std::out_of_range("restrict_columns: column " + std::to_string(col) + " >= " +
                                    std::to_string(m.cols()));
        for (std::size_t r = 0; r < m.rows(); ++r) out(r, j) = m(r, col);
    }
    return out;
}

namespace {

struct QrSolve {
    Vector solution;
    double min_pivot = 0.0;
    double max_pivot = 0.0;
};

// Householder QR applied in place to (a, y), then back substitution.
QrSolve householder_solve(DenseMatrix a, Vector y) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Vector diag(n, 0.0);
    Vector v(m);
    for (std::size_t j = 0; j < n; ++j) {
        double norm_sq = 0.0;
        for (std::size_t i = j; i < m; ++i) norm_sq += a(i, j) * a(i, j);
        const double norm = std::sqrt(norm_sq);
        if (norm == 0.0) {
            diag[j] = 0.0;
            continue;
        }
        const double alpha = a(j, j) > 0.0 ? -norm : norm;
        for (std::size_t i = j; i < m; ++i) v[i] = a(i, j);
        v[j] -= alpha;
        double v_sq = 0.0;
        for (std::size_t i = j; i < m; ++i) v_sq += v[i] * v[i];
        diag[j] = alpha;
        if (v_sq == 0.0) continue;
        for (std::size_t c = j + 1; c < n; ++c) {
            double proj = 0.0;
            for (std::size_t i = j; i < m; ++i) proj += v[i] * a(i, c);
            const double f = 2.0 * proj / v_sq;
            for (std::size_t i = j; i < m; ++i) a(i, c) -= f * v[i];
        }
        double proj = 0.0;
        for (std::size_t i = j; i < m; ++i) proj += v[i] * y[i];
        const double f = 2.0 * proj / v_sq;
        for (std::size_t i = j; i < m; ++i) y[i] -= f * v[i];
    }

    QrSolve out;
    out.max_pivot = 0.0;
    out.min_pivot = n == 0 ? 0.0 : std::abs(diag[0]);
    for (double d : diag) {
        out.max_pivot = std::max(out.max_pivot, std::abs(d));
        out.min_pivot = std::min(out.min_pivot, std::abs(d));
    }
    if (n > 0 && out.min_pivot < kRankTolerance * out.max_pivot) return out;
    if (n > 0 && out.max_pivot == 0.0) return out;

    out.solution.assign(n, 0.0);
    for (std::size_t jj = n; jj-- > 0;) {
        double s = y[jj];
        for (std::size_t c = jj + 1; c < n; ++c) s -= a(jj, c) * out.solution[c];
        out.solution[jj] = s / diag[jj];
    }
    return out;
}

}  // namespace

LeastSquaresResult least_squares(const DenseMatrix& a, std::span<const double> y) {
    if (a.rows() < a.cols())
        throw std::invalid_argument("least_squares: underdetermined system " + shape_string(a));
    if (a.rows() != y.size()) throw std::invalid_argument("least_squares: right-hand side length mismatch");
    if (a.cols() == 0) return {};

    QrSolve plain = householder_solve(a, Vector(y.begin(), y.end()));
    if (!plain.solution.empty()) return {std::move(plain.solution), false};

    // Rank-deficient: minimize ||y - a z||^2 + ridge ||z||^2 through the
    // stacked system [a; sqrt(ridge) I] z = [y; 0], which has full column rank.
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    DenseMatrix stacked(m + n, n);
    for (std::size_t r = 0; r < m; ++r) std::copy_n(a.row(r).begin(), n, stacked.row(r).begin());
    for (std::size_t j = 0; j < n; ++j) stacked(m + j, j) = std::sqrt(kRidge);
    Vector rhs(m + n, 0.0);
    std::copy(y.begin(), y.end(), rhs.begin());
    QrSolve ridge = householder_solve(std::move(stacked), std::move(rhs));
    if (ridge.solution.empty()) throw std::runtime_error("least_squares: ridge system is singular");
    return {std::move(ridge.solution), true};
}

EigenDecomposition sym_eig(const DenseMatrix& c) {
    const std::size_t n = c.rows();
    if (c.cols() != n) throw std::invalid_argument("sym_eig: matrix is not square (" + shape_string(c) + ")");
    double scale = 1.0;
    for (double v : c.values()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(c(i, j) - c(j, i)) > 1e-12 * scale)
                throw std::invalid_argument("sym_eig: matrix is not symmetric at (" + std::to_string(i) + ", " +
                                            std::to_string(j) + ")");

    DenseMatrix a = c;
    DenseMatrix v = DenseMatrix::identity(n);
    const double target = 1e-12 * std::max(1.0, frobenius_norm(c));
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    std::size_t sweep = 0;
    for (; sweep < 100 && off_norm() >= target; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cs = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * cs;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = cs * akp - sn * akq;
                    a(k, q) = sn * akp + cs * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = cs * apk - sn * aqk;
                    a(q, k) = sn * apk + cs * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = cs * vkp - sn * vkq;
                    v(k, q) = sn * vkp + cs * vkq;
                }
            }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    EigenDecomposition out;
    out.sweeps = sweep;
    out.eigenvalues.resize(n);
    out.eigenvectors = DenseMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = a(order[j], order[j]);
        for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, j) = v(k, order[j]);
    }
    return out;
}

}  // namespace ksae
