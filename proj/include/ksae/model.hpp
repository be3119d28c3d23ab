#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "ksae/dense_matrix.hpp"
#include "ksae/rng.hpp"
#include "ksae/sparse_code.hpp"
#include "ksae/topk.hpp"

namespace ksae {

// Tied-weight linear autoencoder. Column j of `weights` is dictionary atom j;
// the encoder is weights^T.
//
//   z     = W^T x + b          (hidden activities)
//   x_hat = W z_Gamma + b_out  (reconstruction from the k-sparse code)
struct KsaeModel {
    DenseMatrix weights;  // input_dim x hidden_dim
    Vector hidden_bias;   // hidden_dim
    Vector output_bias;   // input_dim

    KsaeModel() = default;
    KsaeModel(std::size_t input_dim, std::size_t hidden_dim);
    KsaeModel(DenseMatrix w, Vector b, Vector b_out);

    // W ~ N(0, sigma^2), zero biases.
    static KsaeModel random(std::size_t input_dim, std::size_t hidden_dim, double sigma, Rng& rng);

    std::size_t input_dim() const noexcept { return weights.rows(); }
    std::size_t hidden_dim() const noexcept { return weights.cols(); }
    bool all_finite() const noexcept;

    // W, b, b_out in that order.
    std::array<std::span<double>, 3> parameters() noexcept;

    friend bool operator==(const KsaeModel&, const KsaeModel&) = default;
};

// Hidden activities before sparsification.
Vector forward(const KsaeModel& model, std::span<const double> x);
// One row of activities per row of x_batch.
DenseMatrix forward_batch(const KsaeModel& model, const DenseMatrix& x_batch);

SparseCode sparsify(std::span<const double> z, std::size_t k);
// Sparse mat-vec over the code's support plus b_out.
Vector reconstruct(const KsaeModel& model, const SparseCode& code);
// Sum of squared differences.
double loss(std::span<const double> x, std::span<const double> x_hat);

struct Gradients {
    DenseMatrix weights;
    Vector hidden_bias;
    Vector output_bias;
    double loss = 0.0;               // mean per-sample squared error
    std::vector<SparseCode> codes;   // the k-sparse code of every sample
};

enum class GradientPath : unsigned { kDecoder = 1, kEncoder = 2, kBoth = 3 };

// Gradient of mean_s ||x_s - x_hat_s||^2 with each sample's code taken as
// (W^T x_s + b) restricted to its own top-k support. Both the decoder and the
// encoder path flow into the tied weights.
Gradients backward(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k);

// Same with the supports given (one per row); used to freeze the selection.
Gradients backward_with_supports(const KsaeModel& model, const DenseMatrix& x_batch,
                                 std::span<const SupportSet> supports, GradientPath path = GradientPath::kBoth);

// Number of hidden units used when encoding with (k, alpha): round(alpha*k)
// clamped to [k, hidden_dim].
std::size_t encoding_width(std::size_t k, double alpha, std::size_t hidden_dim);

// h = W^T x + b restricted to its encoding_width(k, alpha) largest entries.
SparseCode encode_features(const KsaeModel& model, std::span<const double> x, std::size_t k, double alpha);
std::vector<SparseCode> encode_batch(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k,
                                     double alpha);
// encode_batch, densified.
DenseMatrix encode_dense(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k, double alpha);

}  // namespace ksae
