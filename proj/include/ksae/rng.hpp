#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "ksae/dense_matrix.hpp"

namespace ksae {

// xoshiro256** seeded through splitmix64. Every distribution below is built
// from next_u64() with explicit arithmetic, so a seed yields the same stream
// on every platform (unlike the <random> distributions, whose algorithms are
// implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64() noexcept;
    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n); rejection sampling, no modulo bias.
    std::size_t uniform_index(std::size_t n);
    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double gaussian() noexcept;

    void shuffle(std::span<std::size_t> items);

    // Independent generator for sub-stream `stream` (per-trial seeds and the like).
    static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

// n i.i.d. N(0, sigma^2) draws.
Vector rng_gaussian(Rng& rng, std::size_t n, double sigma);
DenseMatrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sigma);

}  // namespace ksae
