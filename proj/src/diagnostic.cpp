#include "ksae/diagnostic.hpp"

#include <algorithm>
#include <cmath>

#include "ksae/linalg.hpp"
#include "ksae/recovery.hpp"

namespace ksae {

double decoder_gradient_gap(const KsaeModel& model, std::span<const double> x, const SupportSet& support) {
    const DenseMatrix single = DenseMatrix(1, x.size(), Vector(x.begin(), x.end()));
    const std::array<SupportSet, 1> supports{support};
    const Gradients g = backward_with_supports(model, single, supports, GradientPath::kDecoder);

    const SparseCode& z = g.codes.front();
    const Vector x_hat = reconstruct(model, z);
    double gap = 0.0;
    for (std::size_t c = 0; c < z.nnz(); ++c) {
        const std::size_t j = z.indices()[c];
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double closed_form = (x_hat[i] - x[i]) * z.values()[c];
            gap = std::max(gap, std::abs(g.weights(i, j) / 2.0 - closed_form));
        }
    }
    return gap;
}

EncoderVsItiReport ksae_vs_iti_diagnostic(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k) {
    EncoderVsItiReport report;
    report.samples = x_batch.rows();
    if (x_batch.rows() == 0) return report;
    const DenseMatrix pre = forward_batch(model, x_batch);

    double overlap_sum = 0.0;
    double exact = 0.0;
    double discrepancy_sum = 0.0;
    std::size_t discrepancy_terms = 0;
    for (std::size_t s = 0; s < x_batch.rows(); ++s) {
        const SupportSet enc = top_k_support(pre.row(s), k);
        Vector centered(x_batch.row(s).begin(), x_batch.row(s).end());
        for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= model.output_bias[i];

        const ItiResult iti = iti_recover(model.weights, centered, k);
        const SupportSet iti_support = iti.code.nnz() == 0 ? SupportSet() : iti.code.support();
        std::size_t shared = 0;
        for (std::size_t j : enc) shared += iti_support.contains(j) ? 1 : 0;
        overlap_sum += static_cast<double>(shared) / static_cast<double>(k);
        exact += enc == iti_support ? 1.0 : 0.0;

        const InversionResult pinv = iti_inversion_step(model.weights, centered, enc);
        for (std::size_t c = 0; c < enc.k(); ++c) {
            discrepancy_sum += std::abs(pre(s, enc.indices()[c]) - pinv.code.values()[c]);
            ++discrepancy_terms;
        }
        report.decoder_gradient_gap =
            std::max(report.decoder_gradient_gap, decoder_gradient_gap(model, x_batch.row(s), enc));
    }
    const double n = static_cast<double>(x_batch.rows());
    report.support_agreement = overlap_sum / n;
    report.exact_support_match = exact / n;
    report.mean_value_discrepancy = discrepancy_terms == 0 ? 0.0 : discrepancy_sum / static_cast<double>(discrepancy_terms);
    return report;
}

}  // namespace ksae
