#pragma once

// Counter-based SplitMix64: value i of stream s is mix(s + (i+1) * golden).
// Pure integer arithmetic, so every platform produces the same sequence.

#include <cstdint>
#include <string_view>

namespace saccade {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class SplitMix64 {
public:
    using result_type = std::uint64_t;
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : seed_(seed) {}

    // Random access into the stream.
    constexpr std::uint64_t at(std::uint64_t counter) const noexcept {
        return splitmix64_mix(seed_ + (counter + 1) * kGolden);
    }

    constexpr std::uint64_t operator()() noexcept { return at(counter_++); }

    // Uniform double in [0, 1) from the top 53 bits.
    constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    static constexpr std::uint64_t min() noexcept { return 0; }
    static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

// FNV-1a, used to derive per-image seeds from image ids.
inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view key) noexcept {
    return splitmix64_mix(seed ^ fnv1a64(key));
}

} // namespace saccade
