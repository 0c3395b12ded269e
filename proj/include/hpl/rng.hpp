#pragma once

#include <cstdint>

namespace hpl {

/// SplitMix64 (Steele, Lea, Flood 2014): 64-bit state, output = mix(state += 0x9E3779B97F4A7C15).
/// Chosen because it is trivially portable, so sampled datasets are bit-reproducible
/// across languages.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t operator()() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    constexpr double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    /// lo + (hi - lo) * u; returns lo exactly when lo == hi.
    constexpr double uniform(double lo, double hi) noexcept {
        const double u = uniform();
        return lo == hi ? lo : lo + (hi - lo) * u;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~std::uint64_t{0}; }

    [[nodiscard]] constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace hpl
