#pragma once

#include <cstdint>

namespace driftwave::rng {

// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic key for (seed, stream, index) triples.
constexpr std::uint64_t key(std::uint64_t seed, std::uint64_t stream,
                            std::uint64_t index) noexcept {
    return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

// Uniform on [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr double uniform(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t index) noexcept {
    return to_unit(key(seed, stream, index));
}

// Counter-based splittable generator (the SplitMix64 sequence): the state is
// a Weyl counter started at a key, each output is the mixed counter.
class SplitMixEngine {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMixEngine(std::uint64_t state) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    constexpr result_type operator()() noexcept {
        std::uint64_t x = (state_ += 0x9e3779b97f4a7c15ULL);
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t state_;
};

// Engine for sample `index` of a counter-keyed family. Samples with distinct
// indices draw from distinct streams, so reordered or parallel evaluation
// reproduces the same values.
constexpr SplitMixEngine stream_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
    return SplitMixEngine(key(seed, stream, index));
}

}  // namespace driftwave::rng
