#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ksae/dense_matrix.hpp"
#include "ksae/rng.hpp"
#include "ksae/sparse_code.hpp"
#include "ksae/topk.hpp"

namespace ksae {

// Each column scaled to unit l2 norm. Throws std::invalid_argument naming the
// first column whose norm is below 1e-12.
DenseMatrix normalize_columns(const DenseMatrix& w);

// max_{i != j} |<w_i, w_j>|; 0 for a single column. Columns must have unit
// norm within 1e-9.
double mutual_coherence(const DenseMatrix& w);
// Same, without the unit-norm check.
double max_abs_inner_product(const DenseMatrix& w);

// W^T W - I
DenseMatrix gram_offdiagonal(const DenseMatrix& w);

// supp_k(z + W^T (x - W z)); with z = 0 this is supp_k(W^T x).
SupportSet iti_support_step(const DenseMatrix& w, std::span<const double> x, const SparseCode& z, std::size_t k);

struct InversionResult {
    SparseCode code;
    bool regularized = false;
};

// Least-squares values on `support`, zero elsewhere.
InversionResult iti_inversion_step(const DenseMatrix& w, std::span<const double> x, const SupportSet& support);

struct ItiResult {
    SparseCode code;
    std::size_t iterations = 0;   // inversion steps performed
    double residual_norm = 0.0;   // ||x - W code||_2
    bool converged = false;       // support fixed point or relative residual below tol
    bool regularized = false;     // some inversion needed the ridge fallback
    std::vector<double> residual_history;
};

inline constexpr std::size_t kItiMaxIters = 50;
inline constexpr double kItiTolerance = 1e-10;

// Iterative thresholding with inversion from z = 0. Stops when the estimated
// support repeats, when ||x - W z|| / ||x|| < tol, or after max_iters.
ItiResult iti_recover(const DenseMatrix& w, std::span<const double> x, std::size_t k,
                      std::size_t max_iters = kItiMaxIters, double tol = kItiTolerance);

enum class ConditionScope { kInScope, kNonPositiveValue, kEmptyCode };

struct ConditionCheck {
    bool holds = false;
    double lhs = 0.0;  // k * mu
    double rhs = 0.0;  // z_min / (2 z_max)
    ConditionScope scope = ConditionScope::kInScope;
};

// One-step support recovery condition k*mu(W) <= z_k / (2 z_1) for a code with
// positive values. Codes with a non-positive value are reported out of scope.
ConditionCheck theorem31_condition(const DenseMatrix& w, const SparseCode& z0);
ConditionCheck theorem31_condition(double mu, const SparseCode& z0);

// k <= 1 + 1/mu(W); always true for mu = 0.
bool donoho_uniqueness(const DenseMatrix& w, std::size_t k);
bool donoho_uniqueness(double mu, std::size_t k);
// Largest k satisfying the uniqueness bound (hidden_dim when mu = 0).
std::size_t donoho_max_k(double mu, std::size_t columns);

struct SynthProblem {
    DenseMatrix dictionary;          // input_dim x hidden_dim, unit-norm columns
    std::vector<SparseCode> codes;   // one per sample, exactly k nonzeros
    DenseMatrix samples;             // n_samples x input_dim, row s = W0 z_s + noise
};

struct ValueRange {
    double lo = 0.5;
    double hi = 1.5;
};

// Requires 1 <= k <= input_dim <= hidden_dim.
SynthProblem make_synth_problem(Rng& rng, std::size_t input_dim, std::size_t hidden_dim, std::size_t n_samples,
                                std::size_t k, double noise_std = 0.0, ValueRange values = {});

// Code with exactly k nonzeros on a uniformly random support.
SparseCode random_sparse_code(Rng& rng, std::size_t dim, std::size_t k, ValueRange values);

// Square matrix with orthonormal columns (Gram-Schmidt of a Gaussian matrix).
DenseMatrix random_orthonormal(Rng& rng, std::size_t n);

struct PlantedTrial {
    std::size_t k = 0;
    double mu = 0.0;               // coherence of the trial's dictionary
    bool condition_holds = false;  // one-step condition for the planted code
    bool support_recovered = false;
    std::size_t iterations = 0;
    double residual = 0.0;         // ||x - W z_hat||_2
};

// One planted problem drawn from `seed`: a unit-norm Gaussian dictionary
// (input_dim x hidden_dim) or, when `orthonormal`, a random orthonormal basis
// (hidden_dim must equal input_dim); a k-sparse code with values in
// [0.5, 1.5]; x = W z0 + noise. Runs iti_recover and compares supports.
PlantedTrial run_planted_trial(std::size_t input_dim, std::size_t hidden_dim, std::size_t k, double noise_std,
                               bool orthonormal, std::uint64_t seed);

// W z for a sparse z.
Vector sparse_matvec(const DenseMatrix& w, const SparseCode& z);

}  // namespace ksae
