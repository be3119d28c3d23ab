#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ksae/model.hpp"
#include "test_util.hpp"

using namespace ksae;
using ksae::testing::central_difference;
using ksae::testing::random_model;
using ksae::testing::relative_error;

namespace {

// Independent loss oracle with the supports held fixed: plain loops, no library kernels.
double frozen_loss(const KsaeModel& m, const DenseMatrix& x, const std::vector<SupportSet>& supports) {
    double total = 0.0;
    for (std::size_t s = 0; s < x.rows(); ++s) {
        Vector z(m.hidden_dim(), 0.0);
        for (std::size_t j : supports[s]) {
            z[j] = m.hidden_bias[j];
            for (std::size_t i = 0; i < m.input_dim(); ++i) z[j] += m.weights(i, j) * x(s, i);
        }
        for (std::size_t i = 0; i < m.input_dim(); ++i) {
            double xh = m.output_bias[i];
            for (std::size_t j : supports[s]) xh += m.weights(i, j) * z[j];
            total += (x(s, i) - xh) * (x(s, i) - xh);
        }
    }
    return total / static_cast<double>(x.rows());
}

}  // namespace

TEST(Model, ForwardIsAffine) {
    KsaeModel m(DenseMatrix::from_rows({{1, 0, 2}, {0, 1, -1}}), Vector{0.5, 0, 0}, Vector{0, 0});
    EXPECT_EQ(forward(m, Vector{1, 2}), (Vector{1.5, 2, 0}));
    EXPECT_THROW(forward(m, Vector{1}), std::invalid_argument);
    EXPECT_THROW(KsaeModel(DenseMatrix(2, 3), Vector(2), Vector(2)), std::invalid_argument);
}

TEST(Model, SparsifyKeepsExactlyK) {
    const Vector z{0.1, -5, 3, 2, 2};
    const SparseCode c = sparsify(z, 2);
    EXPECT_EQ(c.nnz(), 2u);
    EXPECT_EQ(std::vector<std::size_t>(c.indices().begin(), c.indices().end()), (std::vector<std::size_t>{2, 3}));
    EXPECT_EQ(c.densify(), (Vector{0, 0, 3, 2, 0}));
}

TEST(Model, ReconstructUsesOnlyTheSupport) {
    KsaeModel m(DenseMatrix::from_rows({{1, 10}, {2, 20}}), Vector{0, 0}, Vector{0.5, -0.5});
    const SparseCode c(2, {0}, {3.0});
    EXPECT_EQ(reconstruct(m, c), (Vector{3.5, 5.5}));
    EXPECT_DOUBLE_EQ(loss(Vector{1, 1}, Vector{0, 3}), 5.0);
}

TEST(Model, BatchForwardMatchesPerSample) {
    Rng rng(1);
    const KsaeModel m = random_model(rng, 6, 9);
    const DenseMatrix x = gaussian_matrix(rng, 4, 6, 1.0);
    const DenseMatrix z = forward_batch(m, x);
    for (std::size_t s = 0; s < 4; ++s) EXPECT_LT(max_abs_diff(z.row(s), forward(m, x.row(s))), 1e-14);
}

TEST(EncodingWidth, RoundsAndClamps) {
    EXPECT_EQ(encoding_width(6, 3.0, 256), 18u);
    EXPECT_EQ(encoding_width(5, 1.5, 100), 8u);  // round(7.5) = 8
    EXPECT_EQ(encoding_width(5, 1.0, 100), 5u);
    EXPECT_EQ(encoding_width(10, 4.0, 25), 25u);
    EXPECT_THROW(encoding_width(0, 1.0, 10), std::out_of_range);
    EXPECT_THROW(encoding_width(11, 1.0, 10), std::out_of_range);
    EXPECT_THROW(encoding_width(2, 0.5, 10), std::invalid_argument);
}

TEST(Model, EncodeFeaturesHasEncodingWidthNonzeros) {
    Rng rng(4);
    const KsaeModel m = random_model(rng, 8, 20);
    const DenseMatrix x = gaussian_matrix(rng, 30, 8, 1.0);
    for (const SparseCode& c : encode_batch(m, x, 3, 2.0)) EXPECT_EQ(c.nnz(), 6u);
    const DenseMatrix dense = encode_dense(m, x, 3, 2.0);
    for (std::size_t s = 0; s < 30; ++s) {
        std::size_t nnz = 0;
        for (double v : dense.row(s)) nnz += v != 0.0 ? 1 : 0;
        EXPECT_EQ(nnz, 6u);
    }
}

// Gradients of the mean reconstruction error match central differences of an
// independent loss oracle, supports frozen at those of the unperturbed model.
TEST(ModelGradient, MatchesFiniteDifferences) {
    Rng rng(77);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t in = 2 + rng.uniform_index(11);   // <= 12
        const std::size_t hid = 2 + rng.uniform_index(19);  // <= 20
        const std::size_t k = 1 + rng.uniform_index(hid);
        KsaeModel m = random_model(rng, in, hid);
        const DenseMatrix x = gaussian_matrix(rng, 1 + rng.uniform_index(5), in, 1.0);
        const Gradients g = backward(m, x, k);
        std::vector<SupportSet> supports;
        for (const auto& c : g.codes) supports.push_back(c.support());
        EXPECT_NEAR(g.loss, frozen_loss(m, x, supports), 1e-12);

        auto f = [&] { return frozen_loss(m, x, supports); };
        auto params = m.parameters();
        const std::array<std::span<const double>, 3> analytic{g.weights.values(), g.hidden_bias, g.output_bias};
        for (std::size_t p = 0; p < 3; ++p)
            for (std::size_t i = 0; i < params[p].size(); ++i) {
                const double fd = central_difference(params[p], i, f);
                ASSERT_LT(relative_error(analytic[p][i], fd, 1e-3), 1e-5)
                    << "trial " << trial << " tensor " << p << " entry " << i << ": " << analytic[p][i] << " vs " << fd;
            }
    }
}

// Decoder path alone equals 2 (W_G z_G + b_out - x) z_G^T on the support columns, zero elsewhere.
TEST(ModelGradient, DecoderPathClosedForm) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t in = 3 + rng.uniform_index(10), hid = 4 + rng.uniform_index(16);
        const std::size_t k = 1 + rng.uniform_index(hid);
        const KsaeModel m = random_model(rng, in, hid);
        const Vector xv = rng_gaussian(rng, in, 1.0);
        const DenseMatrix x(1, in, xv);
        const SupportSet support = top_k_support(forward(m, xv), k);
        const std::array<SupportSet, 1> supports{support};
        const Gradients g = backward_with_supports(m, x, supports, GradientPath::kDecoder);

        const Vector z = forward(m, xv);
        for (std::size_t i = 0; i < in; ++i) {
            double residual = m.output_bias[i] - xv[i];
            for (std::size_t j : support) residual += m.weights(i, j) * z[j];
            for (std::size_t j = 0; j < hid; ++j) {
                const double expected = support.contains(j) ? residual * z[j] : 0.0;
                ASSERT_NEAR(g.weights(i, j) / 2.0, expected, 1e-10);
            }
        }
    }
}

TEST(ModelGradient, PathsAddUp) {
    Rng rng(6);
    const KsaeModel m = random_model(rng, 5, 12);
    const DenseMatrix x = gaussian_matrix(rng, 7, 5, 1.0);
    const Gradients both = backward(m, x, 3);
    std::vector<SupportSet> supports;
    for (const auto& c : both.codes) supports.push_back(c.support());
    const Gradients dec = backward_with_supports(m, x, supports, GradientPath::kDecoder);
    const Gradients enc = backward_with_supports(m, x, supports, GradientPath::kEncoder);
    for (std::size_t i = 0; i < both.weights.size(); ++i)
        EXPECT_NEAR(both.weights.values()[i], dec.weights.values()[i] + enc.weights.values()[i], 1e-13);
    EXPECT_EQ(enc.output_bias, Vector(5, 0.0));
    EXPECT_EQ(dec.hidden_bias, Vector(12, 0.0));
}

TEST(ModelGradient, RejectsBadInputs) {
    Rng rng(2);
    const KsaeModel m = random_model(rng, 3, 4);
    EXPECT_THROW(backward(m, DenseMatrix(2, 3), 0), std::out_of_range);
    EXPECT_THROW(backward(m, DenseMatrix(2, 3), 5), std::out_of_range);
    EXPECT_THROW(backward(m, DenseMatrix(0, 3), 1), std::invalid_argument);
    EXPECT_THROW(backward(m, DenseMatrix(2, 2), 1), std::invalid_argument);
}

TEST(Model, IdentityEncoderCases) {
    KsaeModel m(3, 3);
    for (std::size_t i = 0; i < 3; ++i) m.weights(i, i) = 1.0;
    const Vector x{0.5, -2.0, 7.0};
    EXPECT_EQ(forward(m, x), x);
    m.hidden_bias = {1, 1, 1};
    EXPECT_EQ(forward(m, Vector(3, 0.0)), (Vector{1, 1, 1}));
}

TEST(Model, SparsifyAndReconstructByHand) {
    const SparseCode z = sparsify(Vector{0.1, -2.0, 3.0, 0.5}, 2);
    EXPECT_EQ(z, SparseCode(4, {2, 3}, {3.0, 0.5}));

    Rng rng(3);
    const KsaeModel m = random_model(rng, 4, 6);
    EXPECT_EQ(reconstruct(m, SparseCode(6)), m.output_bias);
    KsaeModel no_bias = m;
    no_bias.output_bias.assign(4, 0.0);
    const Vector col = reconstruct(no_bias, SparseCode(6, {2}, {1.0}));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(col[i], m.weights(i, 2));

    // Dense path: W densify(z) + b_out with plain loops.
    const SparseCode c(6, {0, 3, 5}, {0.7, -1.2, 2.0});
    const Vector dense = c.densify();
    const Vector r = reconstruct(m, c);
    for (std::size_t i = 0; i < 4; ++i) {
        double expect = m.output_bias[i];
        for (std::size_t j = 0; j < 6; ++j) expect += m.weights(i, j) * dense[j];
        EXPECT_NEAR(r[i], expect, 1e-14);
    }
}

TEST(Model, LossByHand) {
    EXPECT_EQ(loss(Vector{1, 2}, Vector{1, 2}), 0.0);
    EXPECT_EQ(loss(Vector{1, 0}, Vector{0, 0}), 1.0);
    Rng rng(4);
    for (int t = 0; t < 50; ++t) EXPECT_GE(loss(rng_gaussian(rng, 5, 1.0), rng_gaussian(rng, 5, 1.0)), 0.0);
}

TEST(Model, DensifiedCodeHasExactlyDimMinusKZeros) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.uniform_index(40);
        const std::size_t k = 1 + rng.uniform_index(n);
        const Vector z = rng_gaussian(rng, n, 1.0);
        const Vector d = sparsify(z, k).densify();
        EXPECT_EQ(static_cast<std::size_t>(std::count(d.begin(), d.end(), 0.0)), n - k);
    }
}

TEST(Model, AlphaOneIsTrainingEncodingAndSupportsNest) {
    Rng rng(6);
    const KsaeModel m = random_model(rng, 8, 30);
    for (int t = 0; t < 100; ++t) {
        const Vector x = rng_gaussian(rng, 8, 1.0);
        const std::size_t k = 1 + rng.uniform_index(10);
        EXPECT_EQ(encode_features(m, x, k, 1.0), sparsify(forward(m, x), k));
        const SupportSet narrow = encode_features(m, x, k, 1.0).support();
        const SupportSet wide = encode_features(m, x, k, 2.5).support();
        for (std::size_t j : narrow) EXPECT_TRUE(wide.contains(j));
    }
    // The best digit setting: k = 25, alpha = 3 keeps 75 units.
    const KsaeModel big = random_model(rng, 8, 100);
    EXPECT_EQ(encode_features(big, rng_gaussian(rng, 8, 1.0), 25, 3.0).nnz(), 75u);
}

TEST(ModelGradient, VanishesAtStationaryPoints) {
    // Orthonormal W with x in the span of its support: perfect reconstruction.
    KsaeModel m(3, 3);
    for (std::size_t i = 0; i < 3; ++i) m.weights(i, i) = 1.0;
    const DenseMatrix x = DenseMatrix::from_rows({{2.0, 1.0, 0.0}});
    const Gradients g = backward(m, x, 2);
    EXPECT_EQ(g.loss, 0.0);
    for (double v : g.weights.values()) EXPECT_EQ(v, 0.0);
    for (double v : g.hidden_bias) EXPECT_EQ(v, 0.0);
    for (double v : g.output_bias) EXPECT_EQ(v, 0.0);

    // All-zero batch with zero biases.
    Rng rng(7);
    KsaeModel r = KsaeModel::random(4, 6, 1.0, rng);
    const Gradients z = backward(r, DenseMatrix(3, 4), 2);
    for (double v : z.weights.values()) EXPECT_EQ(v, 0.0);
    for (double v : z.hidden_bias) EXPECT_EQ(v, 0.0);
}
