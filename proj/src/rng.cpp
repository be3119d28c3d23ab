#include "ksae/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace ksae {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
    for (auto& word : s_) word = splitmix64(seed);
}

std::uint64_t Rng::next_u64() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

double Rng::gaussian() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

void Rng::shuffle(std::span<std::size_t> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = uniform_index(i);
        std::swap(items[i - 1], items[j]);
    }
}

std::uint64_t Rng::derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    std::uint64_t state = master ^ (0xD1B54A32D192ED03ULL * (stream + 1));
    return splitmix64(state);
}

Vector rng_gaussian(Rng& rng, std::size_t n, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("rng_gaussian: sigma must be positive");
    Vector out(n);
    for (auto& v : out) v = sigma * rng.gaussian();
    return out;
}

DenseMatrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sigma) {
    return DenseMatrix(rows, cols, rng_gaussian(rng, rows * cols, sigma));
}

}  // namespace ksae
