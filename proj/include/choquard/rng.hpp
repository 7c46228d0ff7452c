#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace choquard {

// splitmix64: tiny, platform-stable generator. Standard-library distributions
// are not bit-reproducible across implementations, so all randomness in the
// project flows through this.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return (next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (deterministic across platforms).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }
};

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    SplitMix64 s(base ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
    return s.next();
}

}
