#pragma once

#include <cstdint>
#include <vector>

namespace sflsim {

// Deterministic random source. SplitMix64 steps with explicit uniform/normal
// transforms, so a seed reproduces the same stream on every platform and
// standard-library implementation (std:: distributions are not portable).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (no cached spare; stream position is a
    // pure function of the number of calls made).
    double normal();

    // Uniform integer in [0, n), exact via rejection sampling.
    std::uint64_t below(std::uint64_t n);

    int index(std::size_t n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

    // Fisher-Yates with this source; std::shuffle is not reproducible across
    // standard libraries.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from {0,...,n-1}, in random order.
    std::vector<int> sample_without_replacement(int n, int k);

  private:
    std::uint64_t state_;
};

// Derives decorrelated child seeds from one master seed. The mixing constants
// are fixed multipliers (golden-ratio and Murmur-style), so per-client,
// per-round streams never move when unrelated parts of a run change.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

// Stream purposes used with derive_seed's last argument.
namespace seed_purpose {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kSampling = 2;
inline constexpr std::uint64_t kBatching = 3;
inline constexpr std::uint64_t kPoison = 4;
inline constexpr std::uint64_t kDefense = 5;
inline constexpr std::uint64_t kData = 6;
inline constexpr std::uint64_t kGan = 7;
} // namespace seed_purpose

} // namespace sflsim
