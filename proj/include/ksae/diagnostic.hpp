#pragma once

#include <cstddef>
#include <span>

#include "ksae/model.hpp"
#include "ksae/topk.hpp"

namespace ksae {

// Compares the one-shot encoder of a k-sparse autoencoder with full ITI
// recovery on the same dictionary.
struct EncoderVsItiReport {
    std::size_t samples = 0;
    // Mean over samples of |encoder support ∩ ITI support| / k.
    double support_agreement = 0.0;
    // Fraction of samples whose two supports are identical.
    double exact_support_match = 0.0;
    // Mean |encoder value - pseudo-inverse value| over encoder supports.
    double mean_value_discrepancy = 0.0;
    // Max |dE/dW_Gamma / 2 - (W_Gamma z_Gamma + b_out - x) z_Gamma^T| over samples.
    double decoder_gradient_gap = 0.0;
};

// Encoder support is supp_k(W^T x + b); ITI runs on (W, x - b_out) so the
// output bias is accounted for on both sides.
EncoderVsItiReport ksae_vs_iti_diagnostic(const KsaeModel& model, const DenseMatrix& x_batch, std::size_t k);

// Max abs difference between half the decoder-path gradient of
// ||x - (W_Gamma z_Gamma + b_out)||^2 (from backward_with_supports) and the
// closed form (W_Gamma z_Gamma + b_out - x) z_Gamma^T, over the support columns.
double decoder_gradient_gap(const KsaeModel& model, std::span<const double> x, const SupportSet& support);

}  // namespace ksae
