#include "sflsim/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sflsim {

double Rng::normal() {
    // Box-Muller; reject u1 == 0 so log stays finite.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: k out of range");
    // Partial Fisher-Yates over an index vector.
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    // Fixed odd multipliers; see header. Each argument lands in its own
    // diffusion stage so (client, round, purpose) streams stay independent.
    std::uint64_t h = master ^ 0xD6E8FEB86659FD93ULL;
    h = (h ^ (a * 0x9E3779B97F4A7C15ULL)) * 0xFF51AFD7ED558CCDULL;
    h ^= h >> 33;
    h = (h ^ (b * 0xC2B2AE3D27D4EB4FULL)) * 0xC4CEB9FE1A85EC53ULL;
    h ^= h >> 33;
    h = (h ^ (c * 0x165667B19E3779F9ULL)) * 0x9E3779B97F4A7C15ULL;
    h ^= h >> 29;
    return h;
}

} // namespace sflsim
