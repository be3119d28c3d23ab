#include "ksae/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ksae/kernels.hpp"
#include "ksae/linalg.hpp"

namespace ksae {

KsaeModel::KsaeModel(std::size_t input_dim, std::size_t hidden_dim)
    : weights(input_dim, hidden_dim), hidden_bias(hidden_dim, 0.0), output_bias(input_dim, 0.0) {}

KsaeModel::KsaeModel(DenseMatrix w, Vector b, Vector b_out)
    : weights(std::move(w)), hidden_bias(std::move(b)), output_bias(std::move(b_out)) {
    if (hidden_bias.size() != weights.cols() || output_bias.size() != weights.rows())
        throw std::invalid_argument("KsaeModel: bias lengths do not match weights " + shape_string(weights));
}

KsaeModel KsaeModel::random(std::size_t input_dim, std::size_t hidden_dim, double sigma, Rng& rng) {
    KsaeModel m(input_dim, hidden_dim);
    m.weights = gaussian_matrix(rng, input_dim, hidden_dim, sigma);
    return m;
}

bool KsaeModel::all_finite() const noexcept {
    auto finite = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return weights.all_finite() && finite(hidden_bias) && finite(output_bias);
}

std::array<std::span<double>, 3> KsaeModel::parameters() noexcept {
    return {weights.values(), std::span<double>(hidden_bias), std::span<double>(output_bias)};
}

Vector forward(const KsaeModel& model, std::span<const double> x) {
    if (x.size() != model.input_dim())
        throw std::invalid_argument("forward: input length " + std::to_string(x.size()) + " != input_dim " +
                                    std::to_string(model.input_dim()));
    Vector z = matvec_t(model.weights, x);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += model.hidden_bias[j];
    return z;
}

DenseMatrix forward_batch(const KsaeModel& model, const DenseMatrix& x_batch) {
    if (x_batch.cols() != model.input_dim())
        throw std::invalid_argument("forward_batch: batch is " + shape_string(x_batch) + " but input_dim is " +
                                    std::to_string(model.input_dim()));
    DenseMatrix z = kernels::parallel::gemm(x_batch, model.weights);
    for (std::size_t s = 0; s < z.rows(); ++s) {
        auto row = z.row(s);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += model.hidden_bias[j];
    }
    return z;
}

SparseCode sparsify(std::span<const double> z, std::size_t k) { return SparseCode::gather(z, top_k_support(z, k)); }

Vector reconstruct(const KsaeModel& model, const SparseCode& code) {
    if (code.dim() != model.hidden_dim())
        throw std::invalid_argument("reconstruct: code dimension " + std::to_string(code.dim()) +
                                    " != hidden_dim " + std::to_string(model.hidden_dim()));
    Vector x_hat = model.output_bias;
    const auto idx = code.indices();
    const auto val = code.values();
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
        double s = 0.0;
        for (std::size_t e = 0; e < idx.size(); ++e) s += model.weights(i, idx[e]) * val[e];
        x_hat[i] += s;
    }
    return x_hat;
}

double loss(std::span<const double> x, std::span<const double> x_hat) {
    if (x.size() != x_hat.size()) throw std::invalid_argument("loss: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - x_hat[i];
        s += d * d;
    }
    return s;
}

Gradients backward(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k) {
    if (k < 1 || k > model.hidden_dim())
        throw std::out_of_range("backward: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(model.hidden_dim()) + "]");
    const DenseMatrix pre = forward_batch(model, x_batch);
    std::vector<SupportSet> supports(pre.rows());
    const auto n = static_cast<std::ptrdiff_t>(pre.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < n; ++s) supports[s] = top_k_support(pre.row(static_cast<std::size_t>(s)), k);
    return backward_with_supports(model, x_batch, supports);
}

Gradients backward_with_supports(const KsaeModel& model, const DenseMatrix& x_batch,
                                 std::span<const SupportSet> supports, GradientPath path) {
    const std::size_t batch = x_batch.rows();
    const std::size_t in = model.input_dim();
    const std::size_t hid = model.hidden_dim();
    if (batch == 0) throw std::invalid_argument("backward: empty batch");
    if (x_batch.cols() != in)
        throw std::invalid_argument("backward: batch is " + shape_string(x_batch) + " but input_dim is " +
                                    std::to_string(in));
    if (supports.size() != batch) throw std::invalid_argument("backward: one support per sample required");

    const DenseMatrix pre = forward_batch(model, x_batch);
    std::vector<SparseCode> codes(batch);
    std::vector<SparseCode> code_grads(batch);  // d(loss_s)/dz on the support, unscaled
    DenseMatrix errors(batch, in);              // x_hat - x
    Vector sample_loss(batch, 0.0);

    const auto n = static_cast<std::ptrdiff_t>(batch);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ss = 0; ss < n; ++ss) {
        const auto s = static_cast<std::size_t>(ss);
        codes[s] = SparseCode::gather(pre.row(s), supports[s]);
        const Vector x_hat = reconstruct(model, codes[s]);
        auto e = errors.row(s);
        const auto x = x_batch.row(s);
        double l = 0.0;
        for (std::size_t i = 0; i < in; ++i) {
            e[i] = x_hat[i] - x[i];
            l += e[i] * e[i];
        }
        sample_loss[s] = l;
        // (W^T e) at the support.
        std::vector<double> g(supports[s].k(), 0.0);
        const auto idx = codes[s].indices();
        for (std::size_t i = 0; i < in; ++i) {
            const double ei = e[i];
            for (std::size_t c = 0; c < idx.size(); ++c) g[c] += model.weights(i, idx[c]) * ei;
        }
        code_grads[s] = SparseCode(hid, std::vector<std::size_t>(idx.begin(), idx.end()), std::move(g));
    }

    Gradients out;
    out.weights = DenseMatrix(in, hid);
    out.hidden_bias.assign(hid, 0.0);
    out.output_bias.assign(in, 0.0);
    const double scale = 2.0 / static_cast<double>(batch);
    const auto p = static_cast<unsigned>(path);

    if (p & static_cast<unsigned>(GradientPath::kDecoder)) {
        // dL/dW(i, j) = 2/B * e_i * z_j on the support; dL/db_out = 2/B * e.
        kernels::parallel::add_sparse_outer(out.weights, errors, codes, scale);
        for (std::size_t s = 0; s < batch; ++s) {
            const auto e = errors.row(s);
            for (std::size_t i = 0; i < in; ++i) out.output_bias[i] += scale * e[i];
        }
    }
    if (p & static_cast<unsigned>(GradientPath::kEncoder)) {
        // z_j = w_j . x + b_j, so dL/dW(i, j) = x_i * dL/dz_j and dL/db_j = dL/dz_j.
        kernels::parallel::add_sparse_outer(out.weights, x_batch, code_grads, scale);
        for (std::size_t s = 0; s < batch; ++s) {
            const auto idx = code_grads[s].indices();
            const auto val = code_grads[s].values();
            for (std::size_t c = 0; c < idx.size(); ++c) out.hidden_bias[idx[c]] += scale * val[c];
        }
    }

    double total = 0.0;
    for (double l : sample_loss) total += l;
    out.loss = total / static_cast<double>(batch);
    out.codes = std::move(codes);
    return out;
}

std::size_t encoding_width(std::size_t k, double alpha, std::size_t hidden_dim) {
    if (k < 1 || k > hidden_dim)
        throw std::out_of_range("encoding_width: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(hidden_dim) + "]");
    if (!(alpha >= 1.0)) throw std::invalid_argument("encoding_width: alpha must be >= 1");
    const double scaled = std::round(alpha * static_cast<double>(k));
    const double capped = std::min(scaled, static_cast<double>(hidden_dim));
    return std::max(k, static_cast<std::size_t>(capped));
}

SparseCode encode_features(const KsaeModel& model, std::span<const double> x, std::size_t k, double alpha) {
    return sparsify(forward(model, x), encoding_width(k, alpha, model.hidden_dim()));
}

std::vector<SparseCode> encode_batch(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k,
                                     double alpha) {
    const std::size_t width = encoding_width(k, alpha, model.hidden_dim());
    const DenseMatrix pre = forward_batch(model, x_batch);
    std::vector<SparseCode> codes(pre.rows());
    const auto n = static_cast<std::ptrdiff_t>(pre.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t s = 0; s < n; ++s) codes[s] = sparsify(pre.row(static_cast<std::size_t>(s)), width);
    return codes;
}

DenseMatrix encode_dense(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k, double alpha) {
    const auto codes = encode_batch(model, x_batch, k, alpha);
    if (codes.empty()) return DenseMatrix(0, model.hidden_dim());
    return densify_rows(codes);
}

}  // namespace ksae
