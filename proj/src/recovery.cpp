#include "ksae/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "ksae/linalg.hpp"

namespace ksae {

DenseMatrix normalize_columns(const DenseMatrix& w) {
    DenseMatrix out = w;
    for (std::size_t c = 0; c < w.cols(); ++c) {
        double sq = 0.0;
        for (std::size_t r = 0; r < w.rows(); ++r) sq += w(r, c) * w(r, c);
        const double norm = std::sqrt(sq);
        if (norm < 1e-12) throw std::invalid_argument("normalize_columns: column " + std::to_string(c) + " has zero norm");
        for (std::size_t r = 0; r < w.rows(); ++r) out(r, c) = w(r, c) / norm;
    }
    return out;
}

double max_abs_inner_product(const DenseMatrix& w) {
    const DenseMatrix gram = matmul_tn(w, w);
    double mu = 0.0;
    for (std::size_t i = 0; i < gram.rows(); ++i)
        for (std::size_t j = i + 1; j < gram.cols(); ++j) mu = std::max(mu, std::abs(gram(i, j)));
    return mu;
}

double mutual_coherence(const DenseMatrix& w) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
        double sq = 0.0;
        for (std::size_t r = 0; r < w.rows(); ++r) sq += w(r, c) * w(r, c);
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-9)
            throw std::invalid_argument("mutual_coherence: column " + std::to_string(c) + " is not unit norm");
    }
    return max_abs_inner_product(w);
}

DenseMatrix gram_offdiagonal(const DenseMatrix& w) {
    DenseMatrix h = matmul_tn(w, w);
    for (std::size_t i = 0; i < h.rows(); ++i) h(i, i) -= 1.0;
    return h;
}

Vector sparse_matvec(const DenseMatrix& w, const SparseCode& z) {
    if (z.dim() != w.cols()) throw std::invalid_argument("sparse_matvec: code dimension mismatch");
    Vector out(w.rows(), 0.0);
    const auto idx = z.indices();
    const auto val = z.values();
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double s = 0.0;
        for (std::size_t e = 0; e < idx.size(); ++e) s += w(r, idx[e]) * val[e];
        out[r] = s;
    }
    return out;
}

SupportSet iti_support_step(const DenseMatrix& w, std::span<const double> x, const SparseCode& z, std::size_t k) {
    if (x.size() != w.rows()) throw std::invalid_argument("iti_support_step: signal length mismatch");
    const Vector wz = sparse_matvec(w, z);
    Vector residual(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) residual[i] = x[i] - wz[i];
    Vector proxy = matvec_t(w, residual);
    const auto idx = z.indices();
    const auto val = z.values();
    for (std::size_t e = 0; e < idx.size(); ++e) proxy[idx[e]] += val[e];
    return top_k_support(proxy, k);
}

InversionResult iti_inversion_step(const DenseMatrix& w, std::span<const double> x, const SupportSet& support) {
    if (support.k() > w.rows())
        throw std::invalid_argument("iti_inversion_step: support of size " + std::to_string(support.k()) +
                                    " exceeds signal dimension " + std::to_string(w.rows()));
    LeastSquaresResult ls = least_squares(restrict_columns(w, support), x);
    return {SparseCode(w.cols(), support.indices(), std::move(ls.solution)), ls.regularized};
}

ItiResult iti_recover(const DenseMatrix& w, std::span<const double> x, std::size_t k, std::size_t max_iters,
                      double tol) {
    if (k > w.rows())
        throw std::invalid_argument("iti_recover: k=" + std::to_string(k) + " exceeds signal dimension " +
                                    std::to_string(w.rows()));
    if (x.size() != w.rows()) throw std::invalid_argument("iti_recover: signal length mismatch");
    ItiResult result;
    result.code = SparseCode(w.cols());
    const double x_norm = norm2(x);
    if (x_norm == 0.0) {
        result.converged = true;
        return result;
    }
    result.residual_norm = x_norm;

    SupportSet previous;
    bool have_previous = false;
    for (std::size_t it = 0; it < max_iters; ++it) {
        SupportSet support = iti_support_step(w, x, result.code, k);
        if (have_previous && support == previous) {
            result.converged = true;
            break;
        }
        InversionResult inv = iti_inversion_step(w, x, support);
        result.code = std::move(inv.code);
        result.regularized = result.regularized || inv.regularized;
        ++result.iterations;
        const Vector wz = sparse_matvec(w, result.code);
        double sq = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - wz[i]) * (x[i] - wz[i]);
        result.residual_norm = std::sqrt(sq);
        result.residual_history.push_back(result.residual_norm);
        previous = std::move(support);
        have_previous = true;
        if (result.residual_norm / x_norm < tol) {
            result.converged = true;
            break;
        }
    }
    return result;
}

ConditionCheck theorem31_condition(double mu, const SparseCode& z0) {
    ConditionCheck out;
    std::size_t k = 0;
    double z_max = 0.0;
    double z_min = std::numeric_limits<double>::infinity();
    for (double v : z0.values()) {
        if (v == 0.0) continue;
        ++k;
        if (v < 0.0) out.scope = ConditionScope::kNonPositiveValue;
        z_max = std::max(z_max, v);
        z_min = std::min(z_min, v);
    }
    out.lhs = static_cast<double>(k) * mu;
    if (k == 0) {
        out.scope = ConditionScope::kEmptyCode;
        return out;
    }
    if (out.scope != ConditionScope::kInScope) return out;
    out.rhs = z_min / (2.0 * z_max);
    out.holds = out.lhs <= out.rhs;
    return out;
}

ConditionCheck theorem31_condition(const DenseMatrix& w, const SparseCode& z0) {
    return theorem31_condition(mutual_coherence(w), z0);
}

bool donoho_uniqueness(double mu, std::size_t k) {
    if (mu == 0.0) return true;
    return static_cast<double>(k) <= 1.0 + 1.0 / mu;
}

bool donoho_uniqueness(const DenseMatrix& w, std::size_t k) { return donoho_uniqueness(mutual_coherence(w), k); }

std::size_t donoho_max_k(double mu, std::size_t columns) {
    if (mu == 0.0) return columns;
    // Guard the floor against 1/mu landing a hair below an integer.
    std::size_t k = static_cast<std::size_t>(std::floor(1.0 + 1.0 / mu));
    while (k > 0 && !donoho_uniqueness(mu, k)) --k;
    while (donoho_uniqueness(mu, k + 1)) ++k;
    return std::min(k, columns);
}

SparseCode random_sparse_code(Rng& rng, std::size_t dim, std::size_t k, ValueRange values) {
    if (k > dim) throw std::invalid_argument("random_sparse_code: k exceeds dimension");
    // Partial Fisher-Yates for a uniform k-subset.
    std::vector<std::size_t> pool(dim);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.uniform_index(dim - i)]);
    std::vector<std::size_t> idx(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(idx.begin(), idx.end());
    std::vector<double> val(k);
    for (auto& v : val) v = rng.uniform(values.lo, values.hi);
    return SparseCode(dim, std::move(idx), std::move(val));
}

SynthProblem make_synth_problem(Rng& rng, std::size_t input_dim, std::size_t hidden_dim, std::size_t n_samples,
                                std::size_t k, double noise_std, ValueRange values) {
    if (k < 1 || k > input_dim || input_dim > hidden_dim)
        throw std::invalid_argument("make_synth_problem: need 1 <= k <= input_dim <= hidden_dim (got k=" +
                                    std::to_string(k) + ", input_dim=" + std::to_string(input_dim) +
                                    ", hidden_dim=" + std::to_string(hidden_dim) + ")");
    if (noise_std < 0.0) throw std::invalid_argument("make_synth_problem: negative noise");
    if (!(values.lo <= values.hi)) throw std::invalid_argument("make_synth_problem: empty value range");
    SynthProblem p;
    p.dictionary = normalize_columns(gaussian_matrix(rng, input_dim, hidden_dim, 1.0));
    p.codes.reserve(n_samples);
    p.samples = DenseMatrix(n_samples, input_dim);
    for (std::size_t s = 0; s < n_samples; ++s) {
        p.codes.push_back(random_sparse_code(rng, hidden_dim, k, values));
        const Vector x = sparse_matvec(p.dictionary, p.codes.back());
        auto row = p.samples.row(s);
        for (std::size_t i = 0; i < input_dim; ++i) row[i] = x[i] + (noise_std > 0.0 ? noise_std * rng.gaussian() : 0.0);
    }
    return p;
}

DenseMatrix random_orthonormal(Rng& rng, std::size_t n) {
    DenseMatrix q = gaussian_matrix(rng, n, n, 1.0);
    for (std::size_t c = 0; c < n; ++c) {
        // Two passes of modified Gram-Schmidt keep the columns orthogonal to
        // rounding level.
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t p = 0; p < c; ++p) {
                double proj = 0.0;
                for (std::size_t r = 0; r < n; ++r) proj += q(r, p) * q(r, c);
                for (std::size_t r = 0; r < n; ++r) q(r, c) -= proj * q(r, p);
            }
        double sq = 0.0;
        for (std::size_t r = 0; r < n; ++r) sq += q(r, c) * q(r, c);
        const double norm = std::sqrt(sq);
        for (std::size_t r = 0; r < n; ++r) q(r, c) /= norm;
    }
    return q;
}

PlantedTrial run_planted_trial(std::size_t input_dim, std::size_t hidden_dim, std::size_t k, double noise_std,
                               bool orthonormal, std::uint64_t seed) {
    if (orthonormal && input_dim != hidden_dim)
        throw std::invalid_argument("run_planted_trial: an orthonormal dictionary must be square");
    Rng rng(seed);
    DenseMatrix w;
    SparseCode z0;
    Vector x;
    if (orthonormal) {
        if (k < 1 || k > input_dim) throw std::invalid_argument("run_planted_trial: need 1 <= k <= input_dim");
        if (noise_std < 0.0) throw std::invalid_argument("run_planted_trial: negative noise");
        w = random_orthonormal(rng, input_dim);
        z0 = random_sparse_code(rng, input_dim, k, ValueRange{});
        x = sparse_matvec(w, z0);
        if (noise_std > 0.0)
            for (double& v : x) v += noise_std * rng.gaussian();
    } else {
        SynthProblem p = make_synth_problem(rng, input_dim, hidden_dim, 1, k, noise_std);
        w = std::move(p.dictionary);
        z0 = std::move(p.codes.front());
        x.assign(p.samples.row(0).begin(), p.samples.row(0).end());
    }
    PlantedTrial t;
    t.k = k;
    t.mu = mutual_coherence(w);
    t.condition_holds = theorem31_condition(t.mu, z0).holds;
    const ItiResult iti = iti_recover(w, x, k);
    t.support_recovered = iti.code.nnz() > 0 && iti.code.support() == z0.support();
    t.iterations = iti.iterations;
    t.residual = iti.residual_norm;
    return t;
}

}  // namespace ksae
